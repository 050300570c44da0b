#include "semstego/pipeline/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "semstego/core/error.hpp"
#include "semstego/metrics/metrics.hpp"
#include "semstego/pipeline/plots.hpp"

namespace semstego::pipeline {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v == 0.0 ? 0.0 : v);
  return buf;
}

int role_rank(const std::string& role) {
  try {
    return static_cast<int>(keygen::parse_role(role));
  } catch (const AccessError&) {
    return 99;
  }
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("results CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

nlohmann::json without_history(nlohmann::json doc) {
  if (doc.is_object()) doc.erase("history");
  return doc;
}

}  // namespace

std::vector<ResultRow> rows_from_records(const std::vector<PipelineRecord>& records,
                                         std::uint64_t seed) {
  std::vector<ResultRow> rows;
  for (const PipelineRecord& r : records) {
    for (const RoleOutcome& o : r.outcomes) {
      rows.push_back({r.image_id, keygen::role_name(o.role), r.snr_train_db, r.snr_test_db,
                      o.metrics.psnr_db, o.metrics.ssim, o.metrics.mse, o.metrics.lpips,
                      r.stego_metrics.psnr_db, seed});
    }
  }
  return rows;
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::make_tuple(a.snr_train_db, a.snr_test_db, a.image_id, role_rank(a.role), a.role) <
           std::make_tuple(b.snr_train_db, b.snr_test_db, b.image_id, role_rank(b.role), b.role);
  });
}

std::string format_results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const ResultRow& r : rows) {
    out += r.image_id + "," + r.role + "," + num(r.snr_train_db) + "," + num(r.snr_test_db) + "," +
           num(r.psnr_db) + "," + num(r.ssim) + "," + num(r.mse) + "," + num(r.lpips) + "," +
           num(r.stego_psnr_db) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  write_text_file(path, format_results_csv(rows));
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ParseError(path.string() + ": missing or unexpected CSV header");
  }
  std::vector<ResultRow> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) {
      throw ParseError(path.string() + " line " + std::to_string(number) + ": expected 10 fields");
    }
    ResultRow r;
    r.image_id = f[0];
    r.role = f[1];
    r.snr_train_db = parse_double(f[2], number);
    r.snr_test_db = parse_double(f[3], number);
    r.psnr_db = parse_double(f[4], number);
    r.ssim = parse_double(f[5], number);
    r.mse = parse_double(f[6], number);
    r.lpips = parse_double(f[7], number);
    r.stego_psnr_db = parse_double(f[8], number);
    r.seed = static_cast<std::uint64_t>(parse_double(f[9], number));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<double, double, int, std::string>, SummaryRow> groups;
  for (const ResultRow& r : rows) {
    SummaryRow& s = groups[{r.snr_train_db, r.snr_test_db, role_rank(r.role), r.role}];
    s.role = r.role;
    s.snr_train_db = r.snr_train_db;
    s.snr_test_db = r.snr_test_db;
    ++s.count;
    s.psnr_db += r.psnr_db;
    s.ssim += r.ssim;
    s.mse += r.mse;
    s.lpips += r.lpips;
    s.stego_psnr_db += r.stego_psnr_db;
  }
  std::vector<SummaryRow> out;
  for (auto& [key, s] : groups) {
    const double n = static_cast<double>(s.count);
    s.psnr_db /= n;
    s.ssim /= n;
    s.mse /= n;
    s.lpips /= n;
    s.stego_psnr_db /= n;
    out.push_back(s);
  }
  return out;
}

std::string format_summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "role,snr_train_db,snr_test_db,count,psnr_db,ssim,mse,lpips,stego_psnr_db\n";
  for (const SummaryRow& s : rows) {
    out += s.role + "," + num(s.snr_train_db) + "," + num(s.snr_test_db) + "," +
           std::to_string(s.count) + "," + num(s.psnr_db) + "," + num(s.ssim) + "," + num(s.mse) +
           "," + num(s.lpips) + "," + num(s.stego_psnr_db) + "\n";
  }
  return out;
}

SweepResult sweep_snr(const RunConfig& cfg, const SweepOptions& options, const Models& models) {
  cfg.validate();
  for (double v : options.snr_train) {
    if (!std::isfinite(v)) throw RangeError("snr_train entries must be finite");
  }
  for (double v : options.snr_test) {
    if (!std::isfinite(v)) throw RangeError("snr_test entries must be finite");
  }
  const std::vector<double> train = sorted_unique(options.snr_train);
  const std::vector<double> test = sorted_unique(options.snr_test);
  SweepResult result;

  keygen::KeyRegistry registry;
  auto captioner = keygen::make_captioner(cfg);
  auto paraphraser = keygen::make_paraphraser(cfg);
  const std::vector<StegoItem> hidden = hide_stage(test_items(cfg, options.images), models, cfg,
                                                   registry, *captioner, *paraphraser);
  const std::vector<keygen::Role> roles(std::begin(keygen::kAllRoles), std::end(keygen::kAllRoles));

  nlohmann::json codecs = nlohmann::json::array();
  for (double snr_train : train) {
    std::optional<semcom::JsccCodec> codec;
    try {
      codec.emplace(load_jscc(cfg, options.codec, snr_train));
    } catch (const NotFoundError& e) {
      result.skipped.push_back({options.codec, snr_train, e.what()});
      continue;
    }
    codecs.push_back({{"snr_train_db", snr_train},
                      {"dir", jscc_dir(cfg, options.codec, snr_train).string()},
                      {"manifest", without_history(codec->manifest)}});
    for (double snr_test : test) {
      semcom::ChannelConfig channel;
      channel.snr_db = snr_test;
      channel.seed = cfg.channel_seed;
      const std::vector<PipelineRecord> records =
          transmit_and_reveal(hidden, registry, models, *codec, channel, cfg, roles);
      std::vector<ResultRow> rows = rows_from_records(records, cfg.seed);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
  }
  sort_rows(result.rows);

  nlohmann::json skipped = nlohmann::json::array();
  for (const SkippedPoint& s : result.skipped) {
    skipped.push_back({{"codec", s.codec}, {"snr_train_db", s.snr_train_db}, {"reason", s.reason}});
  }
  result.manifest = {
      {"config", cfg},
      {"codec", options.codec},
      {"snr_train_list", train},
      {"snr_test_list", test},
      {"images", options.images},
      {"roles", {"legitimate", "eve1", "eve2", "eve3"}},
      {"eve3_private_key", "null embedding"},
      {"seeds", {{"seed", cfg.seed}, {"channel_seed", cfg.channel_seed}}},
      {"streams",
       {{"dataset", "(seed, dataset/(split << 24 | index))"},
        {"channel", "(channel_seed, channel/image_index), shared across SNRs and codecs"},
        {"decoy", "(seed, decoy/image_index)"}}},
      {"models",
       {{"vae", without_history(models.vae.manifest)},
        {"diffusion", without_history(models.predictor.manifest)},
        {"jscc", codecs}}},
      {"ssim",
       {{"window", metrics::SsimConfig{}.window},
        {"k1", metrics::SsimConfig{}.k1},
        {"k2", metrics::SsimConfig{}.k2},
        {"weights", "uniform"}}},
      {"lpips", {{"backend", cfg.feature_extractor_backend}}},
      {"skipped", skipped},
      {"row_count", result.rows.size()}};
  return result;
}

std::vector<fs::path> write_sweep_outputs(const SweepResult& result, const fs::path& out_dir) {
  std::vector<fs::path> written;
  write_results_csv(out_dir / "results.csv", result.rows);
  written.push_back(out_dir / "results.csv");
  write_text_file(out_dir / "summary.csv", format_summary_csv(summarize(result.rows)));
  written.push_back(out_dir / "summary.csv");
  write_json_file(out_dir / "manifest.json", result.manifest);
  written.push_back(out_dir / "manifest.json");
  if (!result.rows.empty()) {
    for (const fs::path& p : emit_plots(result.rows, out_dir / "plots")) written.push_back(p);
  }
  return written;
}

}  // namespace semstego::pipeline
