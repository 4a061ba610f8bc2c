#include "beamkd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "beamkd/errors.hpp"

namespace beamkd::report {

namespace fs = std::filesystem;

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(double v) { return fmt("%.2f", 100.0 * v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

double slot_value(const metrics::SlotMetrics& s, const std::string& metric) {
  if (metric == "top1") return s.top1;
  if (metric == "top3") return s.top3;
  if (metric == "top5") return s.top5;
  if (metric == "dba") return s.dba;
  throw UsageError("unknown metric '" + metric + "'");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

}  // namespace

RunSummary load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a run directory: " + dir.string());
  RunSummary r;
  r.name = dir.filename().string();
  if (r.name.empty()) r.name = dir.parent_path().filename().string();
  const fs::path log = dir / "train_log.jsonl";
  if (fs::exists(log)) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        train::EpochRecord e;
        e.epoch = j.at("epoch").get<int>();
        e.train_loss = j.at("train_loss").get<double>();
        e.val_loss = j.at("val_loss").get<double>();
        e.lr = j.value("lr", 0.0);
        r.history.push_back(e);
      } catch (const nlohmann::json::exception& ex) {
        throw IoError(log.string() + ": " + ex.what());
      }
    }
  }
  const fs::path eval = dir / "eval.json";
  if (fs::exists(eval)) {
    std::ifstream in(eval);
    try {
      r.eval = metrics::report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(eval.string() + ": " + ex.what());
    }
  }
  if (r.history.empty() && !r.eval) throw UsageError(dir.string() + " holds neither train_log.jsonl nor eval.json");
  return r;
}

std::string markdown(std::span<const RunSummary> runs) {
  std::ostringstream md;
  md << "# Beam tracking results\n\n";
  md << "## Averages over slots (%)\n\n";
  md << "| run | samples | ATop-1 | ATop-3 | ATop-5 | ADBA |\n|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : runs) {
    if (!r.eval) continue;
    const auto& e = *r.eval;
    md << "| " << r.name << " | " << e.n_samples << " | " << pct(e.atop1) << " | " << pct(e.atop3) << " | "
       << pct(e.atop5) << " | " << pct(e.adba) << " |\n";
  }
  for (const auto& r : runs) {
    if (!r.eval) continue;
    md << "\n## " << r.name << ": per slot (%)\n\n";
    md << "| slot | Top-1 | Top-3 | Top-5 | DBA |\n|---|---:|---:|---:|---:|\n";
    for (std::size_t j = 0; j < r.eval->per_slot.size(); ++j) {
      const auto& s = r.eval->per_slot[j];
      md << "| t+" << j << " | " << pct(s.top1) << " | " << pct(s.top3) << " | " << pct(s.top5) << " | " << pct(s.dba)
         << " |\n";
    }
  }
  bool any_history = false;
  for (const auto& r : runs) any_history |= !r.history.empty();
  if (any_history) {
    md << "\n## Training\n\n| run | epochs | best epoch | best val loss |\n|---|---:|---:|---:|\n";
    for (const auto& r : runs) {
      if (r.history.empty()) continue;
      const auto best = std::min_element(r.history.begin(), r.history.end(),
                                         [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
      md << "| " << r.name << " | " << r.history.size() << " | " << best->epoch << " | " << fmt("%.5f", best->val_loss)
         << " |\n";
    }
  }
  return md.str();
}

std::string slot_bars_svg(std::span<const RunSummary> runs, const std::string& metric) {
  std::vector<const RunSummary*> with_eval;
  std::size_t slots = 0;
  for (const auto& r : runs)
    if (r.eval) {
      with_eval.push_back(&r);
      slots = std::max(slots, r.eval->per_slot.size());
    }
  const double W = 640, H = 360, left = 50, right = 150, top = 30, bottom = 40;
  const double plot_w = W - left - right, plot_h = H - top - bottom;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(metric)
    << " per slot</text>\n";
  for (int g = 0; g <= 4; ++g) {
    const double y = top + plot_h * (1.0 - g / 4.0);
    s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 5 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt("%.2f", g / 4.0)
      << "</text>\n";
  }
  if (slots > 0 && !with_eval.empty()) {
    const double group = plot_w / static_cast<double>(slots);
    const double bar = group * 0.8 / static_cast<double>(with_eval.size());
    for (std::size_t j = 0; j < slots; ++j) {
      for (std::size_t k = 0; k < with_eval.size(); ++k) {
        const auto& ps = with_eval[k]->eval->per_slot;
        if (j >= ps.size()) continue;
        const double v = std::clamp(slot_value(ps[j], metric), 0.0, 1.0);
        const double x = left + group * static_cast<double>(j) + group * 0.1 + bar * static_cast<double>(k);
        s << "<rect x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", top + plot_h * (1 - v)) << "\" width=\""
          << fmt("%.2f", bar) << "\" height=\"" << fmt("%.2f", plot_h * v) << "\" fill=\"" << kPalette[k % 8]
          << "\"/>\n";
      }
      s << "<text x=\"" << fmt("%.2f", left + group * (j + 0.5)) << "\" y=\"" << top + plot_h + 15
        << "\" text-anchor=\"middle\">t+" << j << "</text>\n";
    }
  }
  for (std::size_t k = 0; k < with_eval.size(); ++k) {
    const double y = top + 14.0 * static_cast<double>(k);
    s << "<rect x=\"" << W - right + 10 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[k % 8]
      << "\"/>\n<text x=\"" << W - right + 25 << "\" y=\"" << y + 9 << "\">" << escape(with_eval[k]->name)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string loss_curves_svg(std::span<const RunSummary> runs) {
  const double W = 640, H = 360, left = 60, right = 150, top = 30, bottom = 40;
  const double plot_w = W - left - right, plot_h = H - top - bottom;
  double max_epoch = 1, lo = INFINITY, hi = -INFINITY;
  for (const auto& r : runs)
    for (const auto& e : r.history) {
      max_epoch = std::max(max_epoch, static_cast<double>(e.epoch));
      lo = std::min({lo, e.train_loss, e.val_loss});
      hi = std::max({hi, e.train_loss, e.val_loss});
    }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi <= lo) hi = lo + 1;
  auto px = [&](double epoch) { return left + plot_w * epoch / max_epoch; };
  auto py = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">loss (solid: train, dashed: validation)</text>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = lo + (hi - lo) * g / 4.0;
    s << "<line x1=\"" << left << "\" y1=\"" << py(v) << "\" x2=\"" << left + plot_w << "\" y2=\"" << py(v)
      << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 5 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">"
      << fmt("%.3g", v) << "</text>\n";
  }
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">epoch (max "
    << static_cast<int>(max_epoch) << ")</text>\n";
  std::size_t k = 0;
  for (const auto& r : runs) {
    if (r.history.empty()) continue;
    std::string train_pts, val_pts;
    for (const auto& e : r.history) {
      train_pts += fmt("%.2f", px(e.epoch)) + "," + fmt("%.2f", py(e.train_loss)) + " ";
      val_pts += fmt("%.2f", px(e.epoch)) + "," + fmt("%.2f", py(e.val_loss)) + " ";
    }
    const char* color = kPalette[k % 8];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << train_pts << "\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-dasharray=\"4 3\" points=\"" << val_pts << "\"/>\n";
    const double y = top + 14.0 * static_cast<double>(k);
    s << "<rect x=\"" << W - right + 10 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/>\n<text x=\"" << W - right + 25 << "\" y=\"" << y + 9 << "\">" << escape(r.name) << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> write_report(std::span<const RunSummary> runs, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> files;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out_dir / name, text);
    files.push_back(out_dir / name);
  };
  emit("report.md", markdown(runs));
  bool any_eval = false, any_history = false;
  for (const auto& r : runs) {
    any_eval |= r.eval.has_value();
    any_history |= !r.history.empty();
  }
  if (any_eval)
    for (const char* m : {"top1", "top3", "top5", "dba"}) emit(std::string("slots_") + m + ".svg", slot_bars_svg(runs, m));
  if (any_history) emit("loss_curves.svg", loss_curves_svg(runs));
  return files;
}

}  // namespace beamkd::report
