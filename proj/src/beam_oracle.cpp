#include "beamkd/beam_oracle.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "beamkd/errors.hpp"

namespace beamkd::beam {

void ArrayGeometry::validate() const {
  if (n_antennas < 1) throw UsageError("ArrayGeometry: n_antennas must be >= 1");
  if (!(spacing > 0.0)) throw UsageError("ArrayGeometry: spacing must be > 0");
}

ComplexVector steering_vector(double angle, const ArrayGeometry& geometry) {
  geometry.validate();
  if (!(std::abs(angle) <= std::numbers::pi / 2))
    throw DomainError("steering_vector: |angle| must be <= pi/2, got " + std::to_string(angle));
  const double phase_step = 2.0 * std::numbers::pi * geometry.spacing * std::sin(angle);
  ComplexVector a(static_cast<std::size_t>(geometry.n_antennas));
  for (std::size_t n = 0; n < a.size(); ++n) a[n] = std::polar(1.0, phase_step * static_cast<double>(n));
  return a;
}

Codebook build_codebook(const ArrayGeometry& geometry, int size, double power_budget) {
  geometry.validate();
  if (size < 1) throw UsageError("build_codebook: size must be >= 1");
  if (!(power_budget > 0.0)) throw UsageError("build_codebook: power_budget must be > 0");

  Codebook cb;
  cb.power_budget = power_budget;
  const double amplitude = std::sqrt(power_budget / geometry.n_antennas);
  for (int c = 0; c < size; ++c) {
    const double w = -std::numbers::pi + (2.0 * c + 1.0) * std::numbers::pi / size;
    ComplexVector v(static_cast<std::size_t>(geometry.n_antennas));
    for (std::size_t n = 0; n < v.size(); ++n) v[n] = std::polar(amplitude, w * static_cast<double>(n));
    cb.spatial_frequencies.push_back(w);
    cb.vectors.push_back(std::move(v));
  }
  return cb;
}

double beam_gain(std::span<const Complex> h, std::span<const Complex> v) {
  if (h.size() != v.size()) throw UsageError("beam_gain: length mismatch");
  Complex acc{0.0, 0.0};
  for (std::size_t n = 0; n < h.size(); ++n) acc += std::conj(h[n]) * v[n];
  return std::norm(acc);
}

int optimal_beam(const ChannelSnapshot& channel, const Codebook& codebook) {
  if (codebook.size() == 0) throw UsageError("optimal_beam: empty codebook");
  if (channel.h.size() != codebook.n_antennas())
    throw UsageError("optimal_beam: channel length does not match codebook");
  int best = 0;
  double best_gain = -1.0;
  for (std::size_t c = 0; c < codebook.size(); ++c) {
    const double g = beam_gain(channel.h, codebook.vectors[c]);
    if (g > best_gain) {
      best_gain = g;
      best = static_cast<int>(c);
    }
  }
  return best;
}

RateReport snr_and_rate(std::span<const ChannelSnapshot> channels, const BeamLabelVector& beams,
                        const Codebook& codebook) {
  if (channels.size() != beams.size()) throw UsageError("snr_and_rate: mismatched lengths");
  RateReport out;
  for (std::size_t t = 0; t < channels.size(); ++t) {
    const int b = beams[t];
    if (b < 0 || static_cast<std::size_t>(b) >= codebook.size())
      throw UsageError("snr_and_rate: beam index out of range");
    if (!(channels[t].noise_power > 0.0)) throw UsageError("snr_and_rate: noise_power must be > 0");
    const double snr = beam_gain(channels[t].h, codebook.vectors[b]) / channels[t].noise_power;
    out.snr_per_slot.push_back(snr);
    out.rate += std::log2(1.0 + snr);
  }
  return out;
}

}  // namespace beamkd::beam
