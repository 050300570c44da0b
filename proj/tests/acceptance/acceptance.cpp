// Acceptance run: trains (or reuses) the toy stack under --work-dir and checks
// criteria 1-10, printing one PASS/FAIL line each.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "semstego/core/config.hpp"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/diffusion/ddim.hpp"
#include "semstego/metrics/metrics.hpp"
#include "semstego/nn/layers.hpp"
#include "semstego/pipeline/dataset.hpp"
#include "semstego/pipeline/models.hpp"
#include "semstego/pipeline/pipeline.hpp"
#include "semstego/pipeline/sweep.hpp"
#include "semstego/semcom/channel.hpp"
#include "semstego/semcom/jscc.hpp"
#include "semstego/vae/vae.hpp"

using namespace semstego;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  RunConfig cfg;
  fs::path work;
  pipeline::Dataset data;
  std::optional<pipeline::Models> models;
  std::size_t latent_images = 100;
  std::size_t security_images = 50;
  std::vector<double> test_snrs{0, 2, 4, 6, 8, 10};
  // Criterion 4 per codec, reused by criterion 9.
  std::map<std::string, Outcome> security;
  nlohmann::json report = nlohmann::json::object();

  const pipeline::Models& stack() {
    if (!models) models = pipeline::load_models(cfg);
    return *models;
  }
};

// ---- 1 --------------------------------------------------------------------

Outcome ddim_algebraic_inversion(Context&) {
  const auto t0 = Clock::now();
  SeededRng rng(1, make_stream_id(StreamStage::generic, 1));
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Tensor z = gaussian_sample(rng, {4, 8, 8});
    const Tensor eps = gaussian_sample(rng, {4, 8, 8});
    // A valid pair: abar_prev >= abar_t, both in (0, 1].
    double a = 1e-4 + (1.0 - 1e-4) * rng.uniform();
    double b = 1e-4 + (1.0 - 1e-4) * rng.uniform();
    if (a > b) std::swap(a, b);
    const double abar_t = a, abar_prev = b;
    const Tensor up = diffusion::ddim_forward_step(z, abar_prev, abar_t, eps);
    const Tensor back = diffusion::ddim_reverse_step(up, abar_t, abar_prev, eps);
    worst = std::max(worst, relative_l2_error(back, z));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0,
          "max_rel_err=" + fmt("%.3g", worst) + " tuples=10000 time=" + fmt("%.2f", secs) + "s"};
}

// ---- latent round trips ---------------------------------------------------

struct LatentSet {
  Tensor z;  // (N, C', H', W')
  std::vector<keygen::KeyPrompt> priv, pub, decoy;
};

LatentSet latent_set(Context& ctx, std::size_t n) {
  const auto items = pipeline::test_items(ctx.cfg, n);
  const auto& m = ctx.stack();
  std::vector<ImageTensor> images;
  LatentSet s;
  for (const auto& it : items) {
    images.push_back(it.image);
    const keygen::KeyPrompt priv = pipeline::caption_key(ctx.cfg, it.image);
    s.priv.push_back(priv);
    s.pub.push_back(keygen::KeyPrompt::from_text(ctx.cfg.decoy_table.at(priv.text)));
    s.decoy.push_back(pipeline::draw_decoy(ctx.cfg, priv, it.index));
  }
  s.z = m.vae.latent_scale * m.vae.encode_batch(vae::stack_images(images)).mu;
  return s;
}

std::vector<diffusion::TextEmbedding> embed_all(const diffusion::KeyEmbedder& e,
                                                const std::vector<keygen::KeyPrompt>& keys,
                                                std::size_t begin, std::size_t end) {
  std::vector<diffusion::TextEmbedding> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(e.embed(keys[i]));
  return out;
}

// sample(invert(z, from), to) in chunks.
Tensor transfer(Context& ctx, const Tensor& z, const std::vector<keygen::KeyPrompt>& from,
                const std::vector<keygen::KeyPrompt>& to, int steps) {
  const auto& m = ctx.stack();
  const diffusion::DiffusionModel model = m.diffusion();
  diffusion::GuidanceConfig g = pipeline::guidance(ctx.cfg);
  g.ddim_steps = steps;
  std::vector<Tensor> parts;
  const std::size_t n = z.dim(0);
  for (std::size_t b = 0; b < n; b += 32) {
    const std::size_t e = std::min(n, b + 32);
    std::vector<Tensor> items;
    for (std::size_t i = b; i < e; ++i) items.push_back(batch_item(z, i));
    const Tensor zT = diffusion::ddim_invert_batch(stack(items), embed_all(m.embedder, from, b, e),
                                                   model, g);
    const Tensor out = diffusion::ddim_sample_batch(zT, embed_all(m.embedder, to, b, e), model, g);
    for (std::size_t i = 0; i < e - b; ++i) parts.push_back(batch_item(out, i));
  }
  return stack(parts);
}

std::vector<double> per_item_error(const Tensor& a, const Tensor& ref) {
  std::vector<double> out;
  for (std::size_t i = 0; i < ref.dim(0); ++i) {
    out.push_back(relative_l2_error(batch_item(a, i), batch_item(ref, i)));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---- 2 and 3 --------------------------------------------------------------

struct RoundTrips {
  std::map<int, double> hide_reveal_error;  // by step count
  std::vector<double> matched50;
  std::vector<double> wrong50;
  double single_key50 = 0.0;  // sample(invert(z, k), k)
  double seconds = 0.0;
};

RoundTrips& round_trips(Context& ctx) {
  static std::optional<RoundTrips> cache;
  if (cache) return *cache;
  RoundTrips r;
  const auto t0 = Clock::now();
  const LatentSet s = latent_set(ctx, ctx.latent_images);
  for (int steps : {25, 50, 100, 200}) {
    const Tensor stego = transfer(ctx, s.z, s.priv, s.pub, steps);
    const Tensor rec = transfer(ctx, stego, s.pub, s.priv, steps);
    const std::vector<double> err = per_item_error(rec, s.z);
    r.hide_reveal_error[steps] = mean_of(err);
    if (steps == 50) {
      r.matched50 = err;
      r.wrong50 = per_item_error(transfer(ctx, stego, s.pub, s.decoy, steps), s.z);
      r.single_key50 = mean_of(per_item_error(transfer(ctx, s.z, s.priv, s.priv, steps), s.z));
    }
  }
  r.seconds = seconds_since(t0);
  cache = r;
  return *cache;
}

Outcome round_trip_fidelity(Context& ctx) {
  const RoundTrips& r = round_trips(ctx);
  const double e50 = r.hide_reveal_error.at(50), e200 = r.hide_reveal_error.at(200);
  // Property over {25, 50, 100, 200}: non-increasing, one <= 5% inversion allowed.
  int inversions = 0;
  bool property = true;
  double prev = -1.0;
  std::ostringstream curve;
  for (const auto& [steps, err] : r.hide_reveal_error) {
    curve << (prev < 0 ? "" : ",") << steps << ":" << fmt("%.4f", err);
    if (prev >= 0 && err > prev) {
      ++inversions;
      if (err > 1.05 * prev) property = false;
    }
    prev = err;
  }
  property = property && inversions <= 1;
  ctx.report["round_trip_curve"] = r.hide_reveal_error;
  ctx.report["round_trip_step_property"] = property;
  ctx.report["single_key_round_trip_50"] = r.single_key50;
  return {e50 <= 0.1 && e200 <= e50 && r.seconds < 600.0,
          "err50=" + fmt("%.4f", e50) + " err200=" + fmt("%.4f", e200) + " images=" +
              std::to_string(r.matched50.size()) + " curve={" + curve.str() +
              "} step_property=" + (property ? "ok" : "violated") + " single_key50=" +
              fmt("%.4f", r.single_key50) + " time=" +
              fmt("%.1f", r.seconds) + "s"};
}

Outcome key_sensitivity(Context& ctx) {
  const RoundTrips& r = round_trips(ctx);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < r.matched50.size(); ++i) wins += r.wrong50[i] > r.matched50[i];
  const double frac = static_cast<double>(wins) / static_cast<double>(r.matched50.size());
  return {frac >= 0.95, std::to_string(wins) + "/" + std::to_string(r.matched50.size()) +
                            " wrong-key errors exceed matched (mean wrong " +
                            fmt("%.3f", mean_of(r.wrong50)) + " vs matched " +
                            fmt("%.3f", mean_of(r.matched50)) + ")"};
}

// ---- 4 and 9 --------------------------------------------------------------

Outcome security_for_codec(Context& ctx, const std::string& codec) {
  pipeline::SweepOptions opt;
  opt.snr_train = {ctx.cfg.snr_train_db};
  opt.snr_test = ctx.test_snrs;
  opt.codec = codec;
  opt.images = ctx.security_images;
  const pipeline::SweepResult res = pipeline::sweep_snr(ctx.cfg, opt, ctx.stack());
  if (!res.skipped.empty()) return {false, "codec " + codec + " missing: " + res.skipped[0].reason};
  const auto summary = pipeline::summarize(res.rows);
  bool ok = true;
  double min_gap = 1e300;
  std::ostringstream gaps;
  nlohmann::json table = nlohmann::json::array();
  for (double snr : ctx.test_snrs) {
    std::map<std::string, const pipeline::SummaryRow*> by_role;
    for (const auto& s : summary) {
      if (s.snr_test_db == snr) by_role[s.role] = &s;
    }
    const auto* legit = by_role.at("legitimate");
    double best_eve_psnr = -1e300;
    for (const char* eve : {"eve1", "eve2", "eve3"}) {
      const auto* e = by_role.at(eve);
      ok = ok && legit->psnr_db > e->psnr_db && legit->lpips < e->lpips;
      best_eve_psnr = std::max(best_eve_psnr, e->psnr_db);
      table.push_back({{"codec", codec}, {"snr_test_db", snr}, {"role", eve},
                       {"psnr_db", e->psnr_db}, {"lpips", e->lpips}});
    }
    table.push_back({{"codec", codec}, {"snr_test_db", snr}, {"role", "legitimate"},
                     {"psnr_db", legit->psnr_db}, {"lpips", legit->lpips}});
    min_gap = std::min(min_gap, legit->psnr_db - best_eve_psnr);
    gaps << (snr == ctx.test_snrs.front() ? "" : ",") << pipeline::format_snr(snr) << ":"
         << fmt("%+.2f", legit->psnr_db - best_eve_psnr);
  }
  ctx.report["security_" + codec] = table;
  return {ok, "codec=" + codec + " images=" + std::to_string(ctx.security_images) +
                  " psnr_gap_vs_best_eve_by_snr={" + gaps.str() + "} min_gap=" +
                  fmt("%.2f", min_gap) + "dB"};
}

Outcome security_ordering(Context& ctx) {
  const std::string& codec = ctx.cfg.codec;
  ctx.security[codec] = security_for_codec(ctx, codec);
  return ctx.security[codec];
}

Outcome plug_and_play(Context& ctx) {
  const auto& codecs = ctx.cfg.jscc.codecs;
  if (codecs.size() < 2) return {false, "fewer than two codec configurations"};
  std::ostringstream detail;
  bool ok = true;
  std::set<std::string> archs;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string& name = codecs[i].name;
    if (!ctx.security.count(name)) ctx.security[name] = security_for_codec(ctx, name);
    const semcom::JsccCodec c = pipeline::load_jscc(ctx.cfg, name, ctx.cfg.snr_train_db);
    archs.insert(nlohmann::json(c.architecture()).dump());
    ok = ok && ctx.security[name].pass;
    detail << name << "(width=" << codecs[i].width << ",depth=" << codecs[i].depth
           << ",params=" << c.params().parameter_count() << "):"
           << (ctx.security[name].pass ? "ordering holds" : "ordering fails") << " ";
  }
  ok = ok && archs.size() == 2;
  return {ok, detail.str() + "distinct=" + (archs.size() == 2 ? "yes" : "no")};
}

// ---- 5 --------------------------------------------------------------------

Outcome channel_calibration(Context&) {
  bool ok = semcom::noise_variance(0.0) == 1.0 && semcom::noise_variance(10.0) == 0.1;
  std::ostringstream d;
  d << "var(0dB)=" << semcom::noise_variance(0.0) << " var(10dB)=" << semcom::noise_variance(10.0);
  SeededRng src(5, make_stream_id(StreamStage::generic, 5));
  const Tensor s = semcom::SymbolVector::from_tensor(gaussian_sample(src, {100000})).symbols;
  const Tensor unit = nn::power_normalize(nn::Var(s.reshaped({1, 100000}))).value().reshaped({100000});
  for (double snr : {0.0, 10.0}) {
    SeededRng rng(5, make_stream_id(StreamStage::channel, static_cast<std::uint32_t>(snr)));
    const Tensor r = semcom::awgn(unit, snr, 1.0, rng);
    const double measured = semcom::empirical_snr_db(unit, r);
    ok = ok && std::abs(measured - snr) <= 0.1;
    d << " measured(" << snr << "dB)=" << fmt("%.4f", measured);
  }
  return {ok, d.str()};
}

// ---- 6 --------------------------------------------------------------------

Outcome jscc_rate_and_quality(Context& ctx) {
  const semcom::JsccCodec codec = pipeline::load_jscc(ctx.cfg, ctx.cfg.codec, ctx.cfg.snr_train_db);
  const semcom::SymbolVector sym = semcom::sem_encode(ctx.data.test.at(0), codec);
  const bool shape_ok = sym.symbols.size() == 256 && codec.symbol_count() == 256;
  const std::uint64_t stream = make_stream_id(StreamStage::channel, 0x00ff0000u);
  const double val_psnr =
      semcom::evaluate_jscc_psnr(codec, ctx.data.validation, 10.0, ctx.cfg.channel_seed, stream);
  std::vector<double> curve;
  std::ostringstream c;
  int violations = 0;
  bool monotone = true;
  for (double snr : ctx.test_snrs) {
    curve.push_back(
        semcom::evaluate_jscc_psnr(codec, ctx.data.test, snr, ctx.cfg.channel_seed, stream));
    c << (curve.size() == 1 ? "" : ",") << pipeline::format_snr(snr) << ":"
      << fmt("%.2f", curve.back());
    if (curve.size() > 1 && curve.back() < curve[curve.size() - 2]) {
      ++violations;
      if (curve[curve.size() - 2] - curve.back() > 0.2) monotone = false;
    }
  }
  ctx.report["jscc_test_psnr_curve"] = curve;
  return {shape_ok && val_psnr >= 18.0 && monotone,
          "codec=" + ctx.cfg.codec + " symbols=" + std::to_string(sym.symbols.size()) +
              " val_psnr@10dB=" + fmt("%.2f", val_psnr) + " test_curve={" + c.str() +
              "} violations=" + std::to_string(violations)};
}

// ---- 7 --------------------------------------------------------------------

double ssim_reference(const Tensor& x, const Tensor& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const double c1 = 1e-4, c2 = 9e-4;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

Outcome metric_oracles(Context&) {
  std::ostringstream d;
  const bool psnr_ok = metrics::psnr_from_mse(0.01) == 20.0;
  d << "psnr(0.01)=" << metrics::psnr_from_mse(0.01);
  SeededRng rng(7, make_stream_id(StreamStage::generic, 7));
  auto random_image = [&](std::size_t c, std::size_t h) {
    Tensor t({c, h, h});
    for (double& v : t.values()) v = rng.uniform();
    return ImageTensor::from_tensor(t);
  };
  const ImageTensor img = random_image(3, 32);
  const double self = metrics::ssim(img, img);
  const bool ident_ok = std::abs(self - 1.0) <= 1e-12;
  d << " ssim(x,x)=" << fmt("%.15g", self);
  double worst_ssim = 0.0, worst_consistency = 0.0;
  for (int i = 0; i < 100; ++i) {
    const ImageTensor a = random_image(1, 11), b = random_image(1, 11);
    worst_ssim = std::max(worst_ssim, std::abs(metrics::ssim(a, b) - ssim_reference(a.pixels, b.pixels)));
    const ImageTensor x = random_image(3, 16), y = random_image(3, 16);
    const double m = metrics::mse(x, y);
    worst_consistency = std::max(worst_consistency,
                                 std::abs(metrics::psnr(x, y) - 10.0 * std::log10(1.0 / m)));
  }
  d << " ssim_ref_max_diff=" << fmt("%.3g", worst_ssim)
    << " psnr_mse_identity_max_diff=" << fmt("%.3g", worst_consistency);
  return {psnr_ok && ident_ok && worst_ssim <= 1e-8 && worst_consistency <= 1e-12, d.str()};
}

// ---- 8 --------------------------------------------------------------------

Outcome vae_checks(Context& ctx) {
  std::ostringstream d;
  const vae::LatentDistribution zero{Tensor({1, 1, 1}, 0.0), Tensor({1, 1, 1}, 0.0)};
  const vae::LatentDistribution one{Tensor({1, 1, 1}, 1.0), Tensor({1, 1, 1}, 0.0)};
  const double kl0 = vae::kl_divergence(zero), kl1 = vae::kl_divergence(one);
  const bool kl_ok = kl0 == 0.0 && kl1 == 0.5;
  d << "kl(0,0)=" << kl0 << " kl(1,0)=" << kl1;

  // Finite-difference check of the training loss on a narrow VAE.
  vae::VaeArchitecture small;
  small.base_width = 4;
  vae::Vae v(small, SeededRng(8, 0));
  SeededRng rng(8, 1);
  Tensor images({2, 3, 8, 8});
  for (double& p : images.values()) p = rng.uniform();
  const Tensor eps = gaussian_sample(rng, {2, 4, 2, 2});
  v.params().zero_grad();
  nn::Var loss = vae::vae_loss_graph(v, images, eps, 0.1);
  loss.backward();
  double worst = 0.0;
  const double h = 1e-6;
  for (const auto& [name, var] : v.params().entries()) {
    const Tensor analytic = var.grad();
    Tensor& value = var.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double plus, minus;
      {
        nn::NoGradGuard guard;
        value[i] = saved + h;
        plus = vae::vae_loss_graph(v, images, eps, 0.1).value()[0];
        value[i] = saved - h;
        minus = vae::vae_loss_graph(v, images, eps, 0.1).value()[0];
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic[i]) /
                                  std::max({1e-4, std::abs(numeric), std::abs(analytic[i])}));
    }
  }
  d << " grad_max_rel_err=" << fmt("%.3g", worst);

  const auto& m = ctx.stack();
  const double val_mse = vae::reconstruction_mse(m.vae, ctx.data.validation);
  const double train_mse = vae::reconstruction_mse(m.vae, ctx.data.train);
  d << " recon_mse(train)=" << fmt("%.5f", train_mse) << " recon_mse(val)=" << fmt("%.5f", val_mse);
  return {kl_ok && worst <= 1e-4 && train_mse <= 0.01 && val_mse <= 0.01, d.str()};
}

// ---- 10 -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome sweep_determinism(Context& ctx) {
  pipeline::SweepOptions opt;
  opt.snr_train = {ctx.cfg.snr_train_db};
  opt.snr_test = {0.0, 10.0};
  opt.codec = ctx.cfg.codec;
  opt.images = 6;
  std::vector<std::string> csv;
  for (const char* run : {"sweep_a", "sweep_b"}) {
    // Each run loads its own copy of the stack, as a separate invocation would.
    const pipeline::Models models = pipeline::load_models(ctx.cfg);
    const fs::path dir = ctx.work / run;
    fs::remove_all(dir);
    pipeline::write_sweep_outputs(pipeline::sweep_snr(ctx.cfg, opt, models), dir);
    csv.push_back(slurp(dir / "results.csv"));
  }
  const bool same = csv[0] == csv[1] && !csv[0].empty();
  return {same, "results.csv bytes=" + std::to_string(csv[0].size()) + "/" +
                    std::to_string(csv[1].size()) + (same ? " identical" : " differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semstego acceptance checks"};
  std::string work = "acceptance_work";
  std::string config_path;
  std::vector<int> only;
  Context ctx;
  app.add_option("--work-dir", work, "Directory for cached models and outputs")->capture_default_str();
  app.add_option("--config", config_path, "RunConfig JSON (defaults otherwise)");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--latent-images", ctx.latent_images, "Images for criteria 2 and 3")->capture_default_str();
  app.add_option("--security-images", ctx.security_images, "Images for criteria 4 and 9")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    ctx.work = work;
    fs::create_directories(ctx.work);
    ctx.cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (config_path.empty()) ctx.cfg.models_dir = (ctx.work / "models").string();
    ctx.cfg.validate();
    ctx.data = pipeline::make_dataset(ctx.cfg.dataset, ctx.cfg.image_size, ctx.cfg.seed);

    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, double>> codecs;
    for (const auto& c : ctx.cfg.jscc.codecs) codecs.emplace_back(c.name, ctx.cfg.snr_train_db);
    const pipeline::EnsureReport ens = pipeline::ensure_models(ctx.cfg, ctx.data, codecs);
    std::cout << "models: trained " << ens.trained.size() << ", reused " << ens.reused.size()
              << " (" << fmt("%.1f", seconds_since(t0)) << "s)" << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "setup failed: " << e.what() << "\n";
    return 2;
  }

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"ddim-algebraic-inversion", ddim_algebraic_inversion},
      {"round-trip-fidelity", round_trip_fidelity},
      {"key-sensitivity", key_sensitivity},
      {"security-ordering", security_ordering},
      {"channel-calibration", channel_calibration},
      {"jscc-rate-and-quality", jscc_rate_and_quality},
      {"metric-oracles", metric_oracles},
      {"vae", vae_checks},
      {"plug-and-play", plug_and_play},
      {"sweep-determinism", sweep_determinism},
  };

  int failed = 0;
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first
              << ": " << o.detail << " [" << fmt("%.1f", secs) << "s]" << std::endl;
    results.push_back({{"criterion", id}, {"name", criteria[i].first}, {"pass", o.pass},
                       {"detail", o.detail}, {"seconds", secs}});
  }
  ctx.report["criteria"] = results;
  write_json_file(ctx.work / "acceptance_report.json", ctx.report);
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " failing criteria" << std::endl;
  return failed ? 1 : 0;
}
