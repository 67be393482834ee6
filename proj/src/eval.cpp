#include "ssacgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ssacgan {

namespace {

void check_same_dims(const Volume& a, const Volume& b) {
  if (a.dims != b.dims || a.voxels.size() != b.voxels.size()) {
    throw std::invalid_argument("volume dims differ: " + std::to_string(a.depth()) + "x" + std::to_string(a.height()) +
                                "x" + std::to_string(a.width()) + " vs " + std::to_string(b.depth()) + "x" +
                                std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
  if (a.voxels.empty()) throw std::invalid_argument("cannot compare empty volumes");
}

Aggregate mean_and_std(const std::vector<double>& values) {
  Aggregate out;
  out.count = values.size();
  if (values.empty()) return out;
  // Offsets from the first value keep a constant list exact.
  const double first = values.front();
  double offset = 0.0;
  for (double v : values) offset += v - first;
  out.mean = first + offset / static_cast<double>(values.size());
  if (values.size() < 2) {
    out.std = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

double mse(const Volume& a, const Volume& b) {
  check_same_dims(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    const double d = static_cast<double>(a.voxels[i]) - static_cast<double>(b.voxels[i]);
    total += d * d;
  }
  return total / static_cast<double>(a.voxels.size());
}

double mae(const Volume& a, const Volume& b) {
  check_same_dims(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    total += std::fabs(static_cast<double>(a.voxels[i]) - static_cast<double>(b.voxels[i]));
  }
  return total / static_cast<double>(a.voxels.size());
}

std::string to_string(Direction d) { return d == Direction::x_to_y ? "x_to_y" : "y_to_x"; }

Direction parse_direction(const std::string& name) {
  if (name == "x_to_y") return Direction::x_to_y;
  if (name == "y_to_x") return Direction::y_to_x;
  throw std::invalid_argument("unknown direction '" + name + "'");
}

Volume translate_volume(const Generator& g, const Volume& source) {
  NoGradGuard no_grad;
  Volume out = source;
  const std::size_t plane = source.slice_size();
  for (std::size_t d = 0; d < source.depth(); ++d) {
    const auto first = source.voxels.begin() + static_cast<std::ptrdiff_t>(d * plane);
    Tensor in = Tensor::from_data({1, 1, source.height(), source.width()},
                                  std::vector<float>(first, first + static_cast<std::ptrdiff_t>(plane)));
    const Tensor pred = g(in);
    std::copy(pred.data().begin(), pred.data().end(), out.voxels.begin() + static_cast<std::ptrdiff_t>(d * plane));
  }
  return out;
}

VolumeTranslator generator_translator(const Generator& g) {
  return [&g](const Volume& v) { return translate_volume(g, v); };
}

TestSet make_test_set(const Dataset& dataset, const std::vector<std::string>& ids) {
  TestSet out;
  for (const auto& id : ids) out.emplace_back(id, dataset.at(id));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

namespace {

std::vector<const std::pair<std::string, SubjectVolumes>*> ordered(const TestSet& test) {
  std::vector<const std::pair<std::string, SubjectVolumes>*> out;
  for (const auto& s : test) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->first < b->first; });
  return out;
}

}  // namespace

DirectionMetrics evaluate_direction(const VolumeTranslator& translate, const TestSet& test, Direction direction) {
  if (test.empty()) throw std::invalid_argument("evaluate_direction: empty test set");
  DirectionMetrics out;
  for (const auto* s : ordered(test)) {
    const Volume& source = direction == Direction::x_to_y ? s->second.x : s->second.y;
    const Volume& target = direction == Direction::x_to_y ? s->second.y : s->second.x;
    const Volume pred = translate(source);
    out.mse += mse(pred, target);
    out.mae += mae(pred, target);
  }
  out.mse /= static_cast<double>(test.size());
  out.mae /= static_cast<double>(test.size());
  return out;
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("aggregate_runs needs at least 2 values");
  return mean_and_std(values);
}

std::vector<double> noise_sweep_mae(const VolumeTranslator& translate, const TestSet& test, Direction direction,
                                    const std::vector<double>& sigmas, std::uint64_t noise_seed) {
  if (sigmas.empty()) throw std::invalid_argument("noise sweep: empty sigma grid");
  if (test.empty()) throw std::invalid_argument("noise sweep: empty test set");
  const Rng base = Rng(noise_seed).child("noise");
  std::vector<double> out;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    if (k > 0 && !(sigmas[k] > sigmas[k - 1])) throw std::invalid_argument("noise sweep: grid must be increasing");
    double total = 0.0;
    for (const auto* s : ordered(test)) {
      const Volume& source = direction == Direction::x_to_y ? s->second.x : s->second.y;
      const Volume& target = direction == Direction::x_to_y ? s->second.y : s->second.x;
      Rng rng = base.child(s->first, k);
      total += mae(translate(add_gaussian_noise(source, static_cast<float>(sigmas[k]), rng)), target);
    }
    out.push_back(total / static_cast<double>(test.size()));
  }
  return out;
}

std::vector<NoiseSweepResult> aggregate_sweeps(const std::vector<NoiseSweepRun>& runs) {
  std::map<std::string, std::vector<const NoiseSweepRun*>> by_regime;
  for (const auto& r : runs) by_regime[r.regime].push_back(&r);
  std::vector<NoiseSweepResult> out;
  for (const auto& [regime, group] : by_regime) {
    NoiseSweepResult res;
    res.regime = regime;
    res.sigmas = group.front()->sigmas;
    for (const auto* r : group) {
      if (r->sigmas != res.sigmas || r->mae.size() != res.sigmas.size()) {
        throw std::invalid_argument("noise sweeps of regime " + regime + " use different grids");
      }
    }
    for (std::size_t k = 0; k < res.sigmas.size(); ++k) {
      std::vector<double> values;
      for (const auto* r : group) values.push_back(r->mae[k]);
      res.mae.push_back(mean_and_std(values));
    }
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RunMetrics>& runs) {
  std::map<std::pair<std::string, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : runs) {
    auto& g = groups[{r.regime, static_cast<int>(r.direction)}];
    g.first.push_back(r.mse);
    g.second.push_back(r.mae);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    out.push_back({key.first, static_cast<Direction>(key.second), mean_and_std(values.first),
                   mean_and_std(values.second)});
  }
  return out;
}

std::string render_sweep_svg(const std::vector<NoiseSweepResult>& sweeps) {
  const double width = 640, height = 420, left = 70, right = 150, top = 30, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double x_max = 0.0, y_max = 0.0;
  for (const auto& s : sweeps) {
    for (std::size_t k = 0; k < s.sigmas.size(); ++k) {
      x_max = std::max(x_max, s.sigmas[k]);
      y_max = std::max(y_max, s.mae[k].mean);
    }
  }
  if (x_max <= 0.0) x_max = 1.0;
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.1;
  auto px = [&](double v) { return left + plot_w * v / x_max; };
  auto py = [&](double v) { return top + plot_h * (1.0 - v / y_max); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_max * i / 4.0, yv = y_max * i / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">" << xv
        << "</text>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">noise sigma</text>\n";
  svg << "<text x=\"18\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + plot_h / 2 << ")\">MAE</text>\n";
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    const auto& s = sweeps[i];
    const char* color = colors[i % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.sigmas.size(); ++k) svg << px(s.sigmas[k]) << ',' << py(s.mae[k].mean) << ' ';
    svg << "\"/>\n";
    for (std::size_t k = 0; k < s.sigmas.size(); ++k) {
      svg << "<circle cx=\"" << px(s.sigmas[k]) << "\" cy=\"" << py(s.mae[k].mean) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    const double ly = top + 20.0 * static_cast<double>(i);
    svg << "<line x1=\"" << left + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 35 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly + 4 << "\">" << s.regime << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_report(const std::vector<RunMetrics>& runs, const std::vector<NoiseSweepRun>& sweeps,
                 const std::filesystem::path& dir) {
  if (runs.empty()) throw std::invalid_argument("emit_report: no metrics to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory " + dir.string() + ": " + ec.message());

  std::ostringstream metrics;
  metrics << "regime,direction,seed,mse,mae\n";
  for (const auto& r : runs) {
    metrics << r.regime << ',' << to_string(r.direction) << ',' << r.seed << ',' << fmt(r.mse) << ',' << fmt(r.mae)
            << '\n';
  }
  write_text(dir / "metrics.csv", metrics.str());

  std::ostringstream summary;
  summary << "regime,direction,n,mse_mean,mse_std,mae_mean,mae_std\n";
  for (const auto& s : summarize(runs)) {
    summary << s.regime << ',' << to_string(s.direction) << ',' << s.mse.count << ',' << fmt(s.mse.mean) << ','
            << fmt(s.mse.std) << ',' << fmt(s.mae.mean) << ',' << fmt(s.mae.std) << '\n';
  }
  write_text(dir / "metrics_summary.csv", summary.str());

  if (sweeps.empty()) return;
  const auto aggregated = aggregate_sweeps(sweeps);
  std::ostringstream sweep;
  sweep << "regime,sigma,n,mae_mean,mae_std\n";
  for (const auto& s : aggregated) {
    for (std::size_t k = 0; k < s.sigmas.size(); ++k) {
      sweep << s.regime << ',' << fmt(s.sigmas[k]) << ',' << s.mae[k].count << ',' << fmt(s.mae[k].mean) << ','
            << fmt(s.mae[k].std) << '\n';
    }
  }
  write_text(dir / "noise_sweep.csv", sweep.str());
  write_text(dir / "noise_sweep.svg", render_sweep_svg(aggregated));
}

std::vector<RunMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "regime,direction,seed,mse,mae") {
    throw std::runtime_error(path.string() + ": unexpected metrics header");
  }
  std::vector<RunMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string regime, direction, seed, m1, m2;
    if (!std::getline(row, regime, ',') || !std::getline(row, direction, ',') || !std::getline(row, seed, ',') ||
        !std::getline(row, m1, ',') || !std::getline(row, m2)) {
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back({regime, parse_direction(direction), std::stoull(seed), std::stod(m1), std::stod(m2)});
  }
  return out;
}

}  // namespace ssacgan
