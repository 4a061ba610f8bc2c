#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

// Ground-truth beam physics for a uniform linear array: steering vectors,
// an oversampled DFT-style codebook and exhaustive-search beam labels.

namespace beamkd::beam {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

struct ArrayGeometry {
  int n_antennas = 16;
  double spacing = 0.5;  ///< element spacing in wavelengths

  void validate() const;
};

struct Codebook {
  std::vector<ComplexVector> vectors;
  std::vector<double> spatial_frequencies;  ///< strictly increasing, in [-pi, pi)
  double power_budget = 1.0;                ///< every vector has v^H v = power_budget

  std::size_t size() const { return vectors.size(); }
  std::size_t n_antennas() const { return vectors.empty() ? 0 : vectors.front().size(); }
};

/// Channel for one time slot.  The transmitted symbol is unit power and is
/// not stored; it scales every beam gain identically.
struct ChannelSnapshot {
  ComplexVector h;
  double noise_power = 1.0;
};

/// Beam indices for slots t..t+J.
using BeamLabelVector = std::vector<int>;

/// exp(i 2 pi spacing n sin(angle)), n = 0..N-1.  |angle| must be <= pi/2.
ComplexVector steering_vector(double angle, const ArrayGeometry& geometry);

/// C beams with spatial frequency -pi + (2c+1) pi / C and entries
/// sqrt(P/N) exp(i w_c n).
Codebook build_codebook(const ArrayGeometry& geometry, int size, double power_budget = 1.0);

/// |h^H v|^2
double beam_gain(std::span<const Complex> h, std::span<const Complex> v);

/// argmax_c |h^H v_c|^2, lowest index on ties.
int optimal_beam(const ChannelSnapshot& channel, const Codebook& codebook);

struct RateReport {
  std::vector<double> snr_per_slot;
  double rate = 0.0;  ///< sum of log2(1 + snr), bits/s/Hz
};

RateReport snr_and_rate(std::span<const ChannelSnapshot> channels, const BeamLabelVector& beams,
                        const Codebook& codebook);

}  // namespace beamkd::beam
