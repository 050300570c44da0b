#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semstego/core/error.hpp"
#include "semstego/pipeline/plots.hpp"
#include "semstego/pipeline/sweep.hpp"

using namespace semstego;
using namespace semstego::pipeline;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string models_dir;
};

struct Guidance {
  std::optional<double> scale;
  std::optional<int> steps;
  std::optional<double> sigma;
};

struct Channel {
  std::vector<double> snr_db;
  std::optional<std::uint64_t> channel_seed;
  std::optional<double> snr_train;
  std::string codec;
  std::optional<std::size_t> images;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "RunConfig JSON file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed (overrides the config)");
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--models-dir", c.models_dir, "Model directory (overrides the config)");
}

void add_guidance(CLI::App* app, Guidance& g) {
  app->add_option("--guidance-scale", g.scale, "Classifier-free guidance scale beta");
  app->add_option("--ddim-steps", g.steps, "DDIM steps for inversion and sampling");
  app->add_option("--sigma", g.sigma, "Reverse-step stochasticity eta (0 for steganography)");
}

void add_channel(CLI::App* app, Channel& c, bool single_snr) {
  if (single_snr) {
    app->add_option("--snr-db", c.snr_db, "Test channel SNR in dB (repeatable)");
    app->add_option("--snr-train", c.snr_train, "Training SNR of the JSCC codec to use");
  }
  app->add_option("--channel-seed", c.channel_seed, "Seed of the channel noise streams");
  app->add_option("--codec", c.codec, "JSCC codec name");
  app->add_option("--images", c.images, "Number of test images");
}

RunConfig resolve(const Common& c, const Guidance* g = nullptr, const Channel* ch = nullptr) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.models_dir.empty()) cfg.models_dir = c.models_dir;
  if (g) {
    if (g->scale) cfg.guidance_scale = *g->scale;
    if (g->steps) cfg.ddim_steps = *g->steps;
    if (g->sigma) cfg.sigma = *g->sigma;
  }
  if (ch) {
    if (!ch->snr_db.empty()) cfg.snr_db_list = ch->snr_db;
    if (ch->channel_seed) cfg.channel_seed = *ch->channel_seed;
    if (ch->snr_train) cfg.snr_train_db = *ch->snr_train;
    if (!ch->codec.empty()) cfg.codec = ch->codec;
    if (ch->images) cfg.eval_images = *ch->images;
  }
  cfg.validate();
  return cfg;
}

Dataset dataset_for(const RunConfig& cfg) {
  return make_dataset(cfg.dataset, cfg.image_size, cfg.seed);
}

void report(const fs::path& out_dir, const std::string& name, const nlohmann::json& doc) {
  write_json_file(out_dir / name, doc);
  std::cout << doc.dump(2) << "\n";
}

nlohmann::json last_history(const nlohmann::json& manifest) {
  if (manifest.contains("history") && !manifest["history"].empty()) return manifest["history"].back();
  return nullptr;
}

std::vector<PipelineRecord> evaluate(const RunConfig& cfg, const Models& models,
                                     const std::vector<keygen::Role>& roles,
                                     keygen::KeyRegistry& registry) {
  const semcom::JsccCodec codec = load_jscc(cfg, cfg.codec, cfg.snr_train_db);
  auto captioner = keygen::make_captioner(cfg);
  auto paraphraser = keygen::make_paraphraser(cfg);
  const std::vector<StegoItem> hidden = hide_stage(test_items(cfg, cfg.eval_images), models, cfg,
                                                   registry, *captioner, *paraphraser);
  std::vector<PipelineRecord> all;
  for (double snr : cfg.snr_db_list) {
    semcom::ChannelConfig channel;
    channel.snr_db = snr;
    channel.seed = cfg.channel_seed;
    std::vector<PipelineRecord> r =
        transmit_and_reveal(hidden, registry, models, codec, channel, cfg, roles);
    all.insert(all.end(), r.begin(), r.end());
  }
  return all;
}

nlohmann::json run_manifest(const RunConfig& cfg, const Models& models) {
  return {{"config", cfg},
          {"seeds", {{"seed", cfg.seed}, {"channel_seed", cfg.channel_seed}}},
          {"eve3_private_key", "null embedding"},
          {"models",
           {{"vae", models.vae.manifest.value("final_val_reconstruction_mse", 0.0)},
            {"diffusion", models.predictor.manifest.value("final_val_loss", 0.0)},
            {"jscc", jscc_dir(cfg, cfg.codec, cfg.snr_train_db).string()}}}};
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw RangeError("invalid SNR list entry '" + cell + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic steganographic communication toolkit"};
  app.require_subcommand(1);

  Common c_vae, c_diff, c_jscc, c_run, c_sweep, c_threat, c_plots;
  Guidance g_run, g_sweep, g_threat;
  Channel ch_run, ch_sweep, ch_threat;

  auto* train_vae = app.add_subcommand("train-vae", "Train the latent VAE");
  add_common(train_vae, c_vae);

  auto* train_diff = app.add_subcommand("train-diffusion", "Train the key-conditioned noise predictor");
  add_common(train_diff, c_diff);
  std::string conditioning;
  train_diff->add_option("--conditioning", conditioning, "additive | midblock");

  auto* train_jscc = app.add_subcommand("train-jscc", "Train JSCC codecs");
  add_common(train_jscc, c_jscc);
  std::string jscc_codec;
  std::string jscc_snrs;
  train_jscc->add_option("--codec", jscc_codec, "Codec name (default: every configured codec)");
  train_jscc->add_option("--snr-train-list", jscc_snrs, "Comma-separated training SNRs in dB");

  auto* run = app.add_subcommand("run", "Run the four-stage pipeline on test images");
  add_common(run, c_run);
  add_guidance(run, g_run);
  add_channel(run, ch_run, true);
  bool dump = true;
  run->add_flag("--dump,!--no-dump", dump, "Dump images as array files and PNGs");

  auto* sweep = app.add_subcommand("sweep", "Evaluate the train x test SNR grid");
  add_common(sweep, c_sweep);
  add_guidance(sweep, g_sweep);
  add_channel(sweep, ch_sweep, false);
  std::string snr_train_list, snr_test_list;
  sweep->add_option("--snr-train-list", snr_train_list, "Comma-separated training SNRs in dB");
  sweep->add_option("--snr-test-list", snr_test_list, "Comma-separated test SNRs in dB");

  auto* threats = app.add_subcommand("eval-threats", "Compare the receiver with eavesdroppers");
  add_common(threats, c_threat);
  add_guidance(threats, g_threat);
  add_channel(threats, ch_threat, true);
  std::vector<std::string> role_names;
  threats->add_option("--role", role_names, "Roles to evaluate (default: all)");

  auto* plots = app.add_subcommand("plots", "Render plots from a results CSV");
  add_common(plots, c_plots);
  std::string results_path;
  plots->add_option("--results", results_path, "results.csv from run or sweep")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_vae) {
      const RunConfig cfg = resolve(c_vae);
      const vae::Vae v = train_vae_model(cfg, dataset_for(cfg));
      v.save(vae_dir(cfg));
      report(c_vae.out_dir, "train_vae.json",
             {{"model_dir", vae_dir(cfg).string()},
              {"trained", v.manifest["trained"]},
              {"latent_scale", v.latent_scale},
              {"final", last_history(v.manifest)}});
    } else if (*train_diff) {
      RunConfig cfg = resolve(c_diff);
      if (!conditioning.empty()) cfg.diffusion.conditioning = conditioning;
      cfg.validate();
      const vae::Vae v = vae::Vae::load(vae_dir(cfg));
      const diffusion::NoisePredictor p = train_diffusion_model(cfg, dataset_for(cfg), v);
      p.save(diffusion_dir(cfg));
      report(c_diff.out_dir, "train_diffusion.json",
             {{"model_dir", diffusion_dir(cfg).string()},
              {"zero_predictor_val_loss", p.manifest["zero_predictor_val_loss"]},
              {"final_val_loss", p.manifest["final_val_loss"]}});
    } else if (*train_jscc) {
      const RunConfig cfg = resolve(c_jscc);
      const Dataset data = dataset_for(cfg);
      const std::vector<double> snrs = jscc_snrs.empty() ? cfg.jscc.snr_train_list : parse_list(jscc_snrs);
      std::vector<std::string> names;
      if (jscc_codec.empty()) {
        for (const auto& codec : cfg.jscc.codecs) names.push_back(codec.name);
      } else {
        names.push_back(jscc_codec);
      }
      nlohmann::json trained = nlohmann::json::array();
      for (const std::string& name : names) {
        for (double snr : snrs) {
          const semcom::JsccCodec codec = train_jscc_model(cfg, data, name, snr);
          codec.save(jscc_dir(cfg, name, snr));
          trained.push_back({{"codec", name},
                             {"snr_train_db", snr},
                             {"model_dir", jscc_dir(cfg, name, snr).string()},
                             {"final", last_history(codec.manifest)}});
        }
      }
      report(c_jscc.out_dir, "train_jscc.json", trained);
    } else if (*run) {
      const RunConfig cfg = resolve(c_run, &g_run, &ch_run);
      const Models models = load_models(cfg);
      keygen::KeyRegistry registry;
      const std::vector<keygen::Role> roles(std::begin(keygen::kAllRoles), std::end(keygen::kAllRoles));
      const std::vector<PipelineRecord> records = evaluate(cfg, models, roles, registry);
      std::vector<ResultRow> rows = rows_from_records(records, cfg.seed);
      sort_rows(rows);
      const fs::path out(c_run.out_dir);
      write_results_csv(out / "results.csv", rows);
      write_text_file(out / "summary.csv", format_summary_csv(summarize(rows)));
      nlohmann::json manifest = run_manifest(cfg, models);
      if (dump) {
        nlohmann::json files = nlohmann::json::array();
        for (const PipelineRecord& r : records) {
          const fs::path dir = out / "images" / ("snr" + format_snr(r.snr_test_db));
          for (const fs::path& p : dump_record(r, dir)) files.push_back(p.lexically_relative(out).string());
        }
        manifest["dumped_images"] = files;
      }
      write_json_file(out / "manifest.json", manifest);
      std::cout << format_summary_csv(summarize(rows));
    } else if (*sweep) {
      const RunConfig cfg = resolve(c_sweep, &g_sweep, &ch_sweep);
      SweepOptions opt;
      opt.snr_train = snr_train_list.empty() ? cfg.jscc.snr_train_list : parse_list(snr_train_list);
      opt.snr_test = snr_test_list.empty() ? cfg.snr_db_list : parse_list(snr_test_list);
      opt.codec = cfg.codec;
      opt.images = cfg.eval_images;
      const Models models = load_models(cfg);
      const SweepResult result = sweep_snr(cfg, opt, models);
      write_sweep_outputs(result, c_sweep.out_dir);
      for (const SkippedPoint& s : result.skipped) {
        std::cerr << "skipped " << s.codec << " @ " << format_snr(s.snr_train_db) << " dB: " << s.reason
                  << "\n";
      }
      std::cout << format_summary_csv(summarize(result.rows));
    } else if (*threats) {
      const RunConfig cfg = resolve(c_threat, &g_threat, &ch_threat);
      std::vector<keygen::Role> roles;
      for (const std::string& r : role_names) roles.push_back(keygen::parse_role(r));
      if (roles.empty()) roles.assign(std::begin(keygen::kAllRoles), std::end(keygen::kAllRoles));
      const Models models = load_models(cfg);
      keygen::KeyRegistry registry;
      std::vector<ResultRow> rows = rows_from_records(evaluate(cfg, models, roles, registry), cfg.seed);
      sort_rows(rows);
      const std::vector<SummaryRow> summary = summarize(rows);
      nlohmann::json doc = run_manifest(cfg, models);
      nlohmann::json table = nlohmann::json::array();
      for (const SummaryRow& s : summary) {
        nlohmann::json entry = {{"role", s.role},       {"snr_test_db", s.snr_test_db},
                                {"psnr_db", s.psnr_db}, {"ssim", s.ssim},
                                {"mse", s.mse},         {"lpips", s.lpips}};
        for (const SummaryRow& l : summary) {
          if (l.role == "legitimate" && l.snr_test_db == s.snr_test_db && s.role != "legitimate") {
            entry["legitimate_psnr_gap_db"] = l.psnr_db - s.psnr_db;
          }
        }
        table.push_back(entry);
      }
      doc["threats"] = table;
      const fs::path out(c_threat.out_dir);
      write_results_csv(out / "threats.csv", rows);
      report(out, "threats.json", doc["threats"]);
      write_json_file(out / "manifest.json", doc);
    } else if (*plots) {
      const std::vector<ResultRow> rows = read_results_csv(results_path);
      for (const fs::path& p : emit_plots(rows, fs::path(c_plots.out_dir) / "plots")) {
        std::cout << p.string() << "\n";
      }
    }
  } catch (const semstego::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
