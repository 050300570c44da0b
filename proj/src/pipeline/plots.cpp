#include "semstego/pipeline/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "semstego/core/config.hpp"
#include "semstego/core/error.hpp"

namespace semstego::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 480, kHeight = 320, kLeft = 64, kRight = 120, kTop = 32, kBottom = 48;
constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

double metric_of(const SummaryRow& s, const std::string& metric) {
  if (metric == "psnr_db") return s.psnr_db;
  if (metric == "ssim") return s.ssim;
  if (metric == "mse") return s.mse;
  return s.lpips;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string render(const std::string& metric, const std::string& role,
                   const std::map<double, std::vector<std::pair<double, double>>>& lines) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& [train, pts] : lines) {
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) {
    x0 -= 1;
    x1 += 1;
  }
  if (y1 == y0) {
    y0 -= 0.5 * std::max(1e-3, std::abs(y0));
    y1 += 0.5 * std::max(1e-3, std::abs(y1));
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) +
                    "\" height=\"" + fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(kLeft) + "\" y=\"18\" font-size=\"13\">" + metric + " (" + role +
         ")</text>\n";
  svg += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(pw) +
         "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    svg += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + fmt(xv) + "</text>\n";
    svg += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py(yv) + 4) +
           "\" text-anchor=\"end\">" + fmt(yv) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 8) +
         "\" text-anchor=\"middle\">test SNR (dB)</text>\n";
  std::size_t color = 0;
  for (const auto& [train, pts] : lines) {
    const char* c = kColors[color % std::size(kColors)];
    std::string path;
    for (const auto& [x, y] : pts) path += fmt(px(x)) + "," + fmt(py(y)) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"2\" points=\"" +
           path + "\"/>\n";
    for (const auto& [x, y] : pts) {
      svg += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"3\" fill=\"" + c +
             "\"/>\n";
    }
    const double ly = kTop + 14 + 16 * static_cast<double>(color);
    svg += "<line x1=\"" + fmt(kWidth - kRight + 10) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
           fmt(kWidth - kRight + 28) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + c +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(kWidth - kRight + 32) + "\" y=\"" + fmt(ly) + "\">train " +
           fmt(train) + " dB</text>\n";
    ++color;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::vector<fs::path> emit_plots(const std::vector<ResultRow>& rows, const fs::path& out_dir) {
  if (rows.empty()) throw RangeError("emit_plots: the results table is empty");
  const std::vector<SummaryRow> summary = summarize(rows);
  std::vector<std::string> roles;
  for (const SummaryRow& s : summary) {
    if (std::find(roles.begin(), roles.end(), s.role) == roles.end()) roles.push_back(s.role);
  }
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create plot directory " + out_dir.string() + ": " + e.what());
  }
  std::vector<fs::path> files;
  for (const char* metric : kPlotMetrics) {
    for (const std::string& role : roles) {
      std::map<double, std::vector<std::pair<double, double>>> lines;
      for (const SummaryRow& s : summary) {
        if (s.role == role) lines[s.snr_train_db].emplace_back(s.snr_test_db, metric_of(s, metric));
      }
      const fs::path file = out_dir / (std::string(metric) + "_" + role + ".svg");
      write_text_file(file, render(metric, role, lines));
      files.push_back(file);
    }
  }
  return files;
}

}  // namespace semstego::pipeline
