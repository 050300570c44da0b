#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstego/pipeline/pipeline.hpp"

namespace semstego::pipeline {

// One evaluation of one image by one role at one grid point.
struct ResultRow {
  std::string image_id;
  std::string role;
  double snr_train_db = 0.0;
  double snr_test_db = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double lpips = 0.0;
  double stego_psnr_db = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader =
    "image_id,role,snr_train_db,snr_test_db,psnr_db,ssim,mse,lpips,stego_psnr_db,seed";

std::vector<ResultRow> rows_from_records(const std::vector<PipelineRecord>& records,
                                         std::uint64_t seed);

// Rows ordered by (snr_train, snr_test, image_id, role).
void sort_rows(std::vector<ResultRow>& rows);
std::string format_results_csv(const std::vector<ResultRow>& rows);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
// Throws ParseError on a malformed file.
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct SummaryRow {
  std::string role;
  double snr_train_db = 0.0;
  double snr_test_db = 0.0;
  std::size_t count = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double lpips = 0.0;
  double stego_psnr_db = 0.0;
};

// Means per (snr_train, snr_test, role).
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
std::string format_summary_csv(const std::vector<SummaryRow>& rows);

struct SweepOptions {
  std::vector<double> snr_train;
  std::vector<double> snr_test;
  std::string codec = "small";
  std::size_t images = 100;
};

struct SkippedPoint {
  std::string codec;
  double snr_train_db = 0.0;
  std::string reason;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<SkippedPoint> skipped;
  nlohmann::json manifest;
};

// Evaluates snr_train x snr_test x role over the first `images` test items.
// A missing codec for some snr_train is recorded as skipped.
SweepResult sweep_snr(const RunConfig& cfg, const SweepOptions& options, const Models& models);

// results.csv, summary.csv, manifest.json and plots/ under out_dir.
std::vector<std::filesystem::path> write_sweep_outputs(const SweepResult& result,
                                                       const std::filesystem::path& out_dir);

}  // namespace semstego::pipeline
