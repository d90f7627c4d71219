#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ctxvid/metrics/image_metrics.hpp"
#include "ctxvid/metrics/trajectory_metrics.hpp"

// MetricReport CSV layout:
//   # key=value            (zero or more header annotations)
//   frame,mse,ssim
//   0,<mse>,<ssim>
//   ...
//   rot_err,trans_err,cam_mc
//   <rot>,<trans>,<cammc>

namespace ctxvid::metrics {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricReport {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<double> mse_per_frame;
  std::vector<double> ssim_per_frame;
  double rot_err = 0, trans_err = 0, cam_mc = 0;

  double mean_mse() const { return mean_of(mse_per_frame, 0, mse_per_frame.size()); }
  double mean_ssim() const { return mean_of(ssim_per_frame, 0, ssim_per_frame.size()); }
  /// Mean MSE over frames [first, last], clamped to the available frames.
  double mean_mse_range(std::size_t first, std::size_t last) const {
    return mean_of(mse_per_frame, first, std::min(last + 1, mse_per_frame.size()));
  }

  std::string annotation(const std::string& key) const {
    for (const auto& [k, v] : header)
      if (k == key) return v;
    return {};
  }

  static double mean_of(const std::vector<double>& v, std::size_t b, std::size_t e) {
    if (e <= b) return 0;
    return std::accumulate(v.begin() + std::ptrdiff_t(b), v.begin() + std::ptrdiff_t(e), 0.0) / double(e - b);
  }
};

inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string to_csv(const MetricReport& r) {
  if (r.mse_per_frame.size() != r.ssim_per_frame.size()) throw ReportError("report has mismatched curve lengths");
  std::ostringstream os;
  for (const auto& [k, v] : r.header) os << "# " << k << '=' << v << '\n';
  os << "frame,mse,ssim\n";
  for (std::size_t t = 0; t < r.mse_per_frame.size(); ++t)
    os << t << ',' << format_number(r.mse_per_frame[t]) << ',' << format_number(r.ssim_per_frame[t]) << '\n';
  os << "rot_err,trans_err,cam_mc\n";
  os << format_number(r.rot_err) << ',' << format_number(r.trans_err) << ',' << format_number(r.cam_mc) << '\n';
  return os.str();
}

inline void write_report(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path.string());
  out << to_csv(r);
}

inline MetricReport parse_report(std::istream& in) {
  MetricReport r;
  std::string line;
  enum { kHeader, kFrames, kFooter, kDone } state = kHeader;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    return f;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      r.header.emplace_back(body.substr(0, eq), eq == std::string::npos ? "" : body.substr(eq + 1));
      continue;
    }
    if (line == "frame,mse,ssim") {
      state = kFrames;
      continue;
    }
    if (line == "rot_err,trans_err,cam_mc") {
      state = kFooter;
      continue;
    }
    const auto f = split(line);
    if (state == kFrames && f.size() == 3) {
      r.mse_per_frame.push_back(std::stod(f[1]));
      r.ssim_per_frame.push_back(std::stod(f[2]));
    } else if (state == kFooter && f.size() == 3) {
      r.rot_err = std::stod(f[0]);
      r.trans_err = std::stod(f[1]);
      r.cam_mc = std::stod(f[2]);
      state = kDone;
    } else {
      throw ReportError("unexpected report line: " + line);
    }
  }
  if (state != kDone) throw ReportError("report is missing the trajectory footer");
  return r;
}

inline MetricReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot read " + path.string());
  return parse_report(in);
}

/// Builds a report from decoded videos on the 0-255 scale and a trajectory pair.
inline MetricReport evaluate(const Video& gen, const Video& gt, const TrajectoryPair& traj, const SsimOptions& opt = {}) {
  MetricReport r;
  r.mse_per_frame = mse_per_frame(gen, gt);
  r.ssim_per_frame = ssim_per_frame(gen, gt, opt);
  const auto norm = normalize_trajectory(traj);
  r.rot_err = rot_err(norm);
  r.trans_err = trans_err(norm);
  r.cam_mc = cam_mc(norm);
  return r;
}

/// Table-style summary: one row per report with total MSE, MSE at the second
/// and last frame, mean SSIM and the trajectory errors.
inline std::string summary_table(const std::vector<std::pair<std::string, MetricReport>>& runs) {
  std::ostringstream os;
  os << "run,mse_total,mse_t2,mse_tlast,ssim_mean,trans_err,rot_err,cam_mc\n";
  for (const auto& [name, r] : runs) {
    const auto& m = r.mse_per_frame;
    os << name << ',' << format_number(r.mean_mse()) << ',' << format_number(m.size() > 1 ? m[1] : 0.0) << ','
       << format_number(m.empty() ? 0.0 : m.back()) << ',' << format_number(r.mean_ssim()) << ',' << format_number(r.trans_err)
       << ',' << format_number(r.rot_err) << ',' << format_number(r.cam_mc) << '\n';
  }
  return os.str();
}

}  // namespace ctxvid::metrics
