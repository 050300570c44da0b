#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "semstego/core/error.hpp"
#include "semstego/pipeline/models.hpp"
#include "semstego/pipeline/pipeline.hpp"
#include "semstego/pipeline/plots.hpp"
#include "semstego/pipeline/sweep.hpp"

using namespace semstego;
using namespace semstego::pipeline;

namespace {

const std::filesystem::path kWork = std::filesystem::temp_directory_path() / "semstego_test_pipeline";

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.models_dir = (kWork / "models").string();
  cfg.ddim_steps = 4;
  cfg.dataset = {24, 6, 12};
  cfg.vae.base_width = 4;
  cfg.vae.epochs = 1;
  cfg.diffusion.base_width = 8;
  cfg.diffusion.d_embed = 16;
  cfg.diffusion.epochs = 1;
  cfg.jscc.codecs = {{"small", 8, 1}, {"wide", 12, 1}};
  cfg.jscc.epochs = 1;
  cfg.jscc.snr_train_list = {0, 10};
  return cfg;
}

// Tiny models trained once per test binary.
const Models& tiny_models() {
  static const Models models = [] {
    const RunConfig cfg = tiny_config();
    std::filesystem::remove_all(kWork);
    const Dataset data = make_dataset(cfg.dataset, cfg.image_size, cfg.seed);
    ensure_models(cfg, data, {{"small", 0.0}, {"small", 10.0}});
    return load_models(cfg);
  }();
  return models;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("model directories and snr formatting") {
  const RunConfig cfg = tiny_config();
  CHECK(format_snr(10.0) == "10");
  CHECK(format_snr(2.5) == "2.5");
  CHECK(format_snr(-0.0) == "0");
  CHECK(jscc_dir(cfg, "wide", 4.0).filename() == "wide_snr4");
  CHECK_THROWS_AS(find_codec(cfg, "swin"), NotFoundError);
  RunConfig missing = cfg;
  missing.models_dir = (kWork / "nowhere").string();
  CHECK_THROWS_AS(load_models(missing), NotFoundError);
}

TEST_CASE("ensure_models reuses saved models") {
  tiny_models();
  const RunConfig cfg = tiny_config();
  const Dataset data = make_dataset(cfg.dataset, cfg.image_size, cfg.seed);
  const EnsureReport report = ensure_models(cfg, data, {{"small", 10.0}});
  CHECK(report.trained.empty());
  CHECK(report.reused.size() == 3);
}

TEST_CASE("end-to-end pipeline records and threat roles") {
  const Models& models = tiny_models();
  const RunConfig cfg = tiny_config();
  const semcom::JsccCodec codec = load_jscc(cfg, "small", 10.0);
  const std::vector<TestItem> items = test_items(cfg, 3);
  CHECK(items[1].image_id == "test_0001");
  const auto records = run_pipeline(items, models, codec, semcom::ChannelConfig{10.0, 1.0, 0, 0}, cfg);
  REQUIRE(records.size() == 3);
  for (const PipelineRecord& r : records) {
    CHECK(r.outcomes.size() == 4);
    CHECK(r.keys.private_key.text != r.keys.public_key.text);
    CHECK(r.keys.private_key == caption_key(cfg, r.secret));
    CHECK(r.stego.in_range());
    CHECK(r.outcomes[1].role == keygen::Role::eve1);
    CHECK(r.outcomes[1].recovered.pixels == r.received.pixels);
    CHECK(r.outcomes[2].decoy.has_value());
    CHECK(*r.outcomes[2].decoy != r.keys.private_key.text);
    for (const RoleOutcome& o : r.outcomes) {
      CHECK(o.metrics.mse >= 0.0);
      CHECK(o.metrics.lpips >= 0.0);
      CHECK(o.metrics.ssim <= 1.0);
    }
  }
  const auto again = run_pipeline(items, models, codec, semcom::ChannelConfig{10.0, 1.0, 0, 0}, cfg);
  CHECK(again[0].outcomes[0].recovered.pixels == records[0].outcomes[0].recovered.pixels);

  const auto files = dump_record(records[0], kWork / "dump");
  CHECK(files.size() == 2 * 7);
  for (const auto& f : files) CHECK(std::filesystem::exists(f));
  CHECK(std::filesystem::exists(kWork / "dump" / "test_0000" / "recovered_eve3.png"));
}

TEST_CASE("eve2 may not use the true private key") {
  const Models& models = tiny_models();
  const RunConfig cfg = tiny_config();
  keygen::KeyRegistry registry;
  auto captioner = keygen::make_captioner(cfg);
  auto paraphraser = keygen::make_paraphraser(cfg);
  const auto stego = hide_stage(test_items(cfg, 1), models, cfg, registry, *captioner, *paraphraser);
  REQUIRE(stego.size() == 1);
  CHECK(registry.size() == 1);
  const ThreatModel cheat{keygen::Role::eve2, stego[0].keys.private_key};
  CHECK_THROWS_AS(eval_threat(cheat, stego[0].stego, stego[0], registry, models, cfg), AccessError);
  const ThreatModel honest{keygen::Role::eve2, std::nullopt};
  const RoleOutcome o = eval_threat(honest, stego[0].stego, stego[0], registry, models, cfg);
  CHECK(*o.decoy == draw_decoy(cfg, stego[0].keys.private_key, 0).text);
}

TEST_CASE("stage failures name the stage") {
  const Models& models = tiny_models();
  const RunConfig cfg = tiny_config();
  semcom::JsccArchitecture arch;
  arch.width = 4;
  arch.image_size = 16;
  const semcom::JsccCodec mismatched(arch, SeededRng(0, 0));
  try {
    run_pipeline(test_items(cfg, 1), models, mismatched, semcom::ChannelConfig{}, cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "stage 3: channel");
  }
  RunConfig bad_keys = cfg;
  bad_keys.caption_table.erase("eiffel_tower");
  try {
    run_pipeline(test_items(cfg, 1), models, load_jscc(cfg, "small", 10.0), semcom::ChannelConfig{},
                 bad_keys);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "stage 1: keys");
  }
}

TEST_CASE("sweep cardinality, csv, plots and determinism") {
  const Models& models = tiny_models();
  RunConfig cfg = tiny_config();
  SweepOptions opt;
  opt.snr_train = {0, 4, 10};
  opt.snr_test = {0, 10};
  opt.images = 2;
  const SweepResult a = sweep_snr(cfg, opt, models);
  CHECK(a.rows.size() == 2 * 2 * 2 * 4);
  REQUIRE(a.skipped.size() == 1);
  CHECK(a.skipped[0].snr_train_db == 4.0);
  CHECK(a.manifest["row_count"] == a.rows.size());

  const auto out1 = kWork / "sweep1";
  const auto out2 = kWork / "sweep2";
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
  write_sweep_outputs(a, out1);
  write_sweep_outputs(sweep_snr(cfg, opt, models), out2);
  CHECK(slurp(out1 / "results.csv") == slurp(out2 / "results.csv"));
  CHECK(slurp(out1 / "summary.csv") == slurp(out2 / "summary.csv"));
  CHECK(slurp(out1 / "manifest.json") == slurp(out2 / "manifest.json"));

  const std::string csv = slurp(out1 / "results.csv");
  CHECK(csv.substr(0, csv.find('\n')) == kCsvHeader);
  const auto back = read_results_csv(out1 / "results.csv");
  CHECK(back.size() == a.rows.size());
  CHECK(format_results_csv(back) == csv);

  const auto summary = summarize(a.rows);
  CHECK(summary.size() == 2 * 2 * 4);
  for (const SummaryRow& s : summary) CHECK(s.count == 2);

  std::size_t svg = 0;
  for (const auto& entry : std::filesystem::directory_iterator(out1 / "plots")) {
    svg += entry.path().extension() == ".svg";
  }
  CHECK(svg == 16);
  CHECK(std::filesystem::exists(out1 / "plots" / "lpips_eve2.svg"));
  CHECK_THROWS_AS(emit_plots({}, kWork / "empty_plots"), RangeError);

  std::ofstream(kWork / "bad.csv") << "image_id,role\nx,y\n";
  CHECK_THROWS_AS(read_results_csv(kWork / "bad.csv"), ParseError);
}
