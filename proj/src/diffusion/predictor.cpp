#include "semstego/diffusion/predictor.hpp"

#include <cmath>

#include "semstego/core/config.hpp"
#include "semstego/core/error.hpp"

namespace semstego::diffusion {

using nn::Var;

ConditioningMode parse_conditioning_mode(const std::string& name) {
  if (name == "additive") return ConditioningMode::additive;
  if (name == "midblock") return ConditioningMode::midblock;
  throw RangeError("unknown conditioning mode '" + name + "'");
}

std::string conditioning_mode_name(ConditioningMode mode) {
  return mode == ConditioningMode::additive ? "additive" : "midblock";
}

void to_json(nlohmann::json& j, const PredictorArchitecture& a) {
  j = nlohmann::json{{"latent_channels", a.latent_channels},
                     {"base_width", a.base_width},
                     {"d_embed", a.d_embed},
                     {"attention_dim", a.attention_dim},
                     {"conditioning", conditioning_mode_name(a.mode)},
                     {"time_max_frequency", a.time_max_frequency},
                     {"time_min_frequency", a.time_min_frequency}};
}

void from_json(const nlohmann::json& j, PredictorArchitecture& a) {
  a.latent_channels = j.at("latent_channels").get<std::size_t>();
  a.base_width = j.at("base_width").get<std::size_t>();
  a.d_embed = j.at("d_embed").get<std::size_t>();
  a.attention_dim = j.at("attention_dim").get<std::size_t>();
  a.mode = parse_conditioning_mode(j.at("conditioning").get<std::string>());
  a.time_max_frequency = j.value("time_max_frequency", a.time_max_frequency);
  a.time_min_frequency = j.value("time_min_frequency", a.time_min_frequency);
}

namespace {

// sin/cos of the normalised row and column coordinates, (B, 4, H, W).
Tensor positional_features(std::size_t batch, std::size_t h, std::size_t w) {
  Tensor out({batch, kPositionalFeatures, h, w});
  const std::size_t plane = h * w;
  for (std::size_t b = 0; b < batch; ++b) {
    double* p = out.data() + b * kPositionalFeatures * plane;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = M_PI * (x + 0.5) / static_cast<double>(w);
        const double v = M_PI * (y + 0.5) / static_cast<double>(h);
        const std::size_t i = y * w + x;
        p[i] = std::sin(u);
        p[plane + i] = std::cos(u);
        p[2 * plane + i] = std::sin(v);
        p[3 * plane + i] = std::cos(v);
      }
    }
  }
  return out;
}

}  // namespace

Var NoisePredictor::ResBlock::operator()(const Var& x, const Var& temb) const {
  Var h = conv1(nn::silu(x));
  h = nn::add_channel_vector(h, time_proj(temb));
  h = conv2(nn::silu(h));
  return nn::add(has_skip ? skip(x) : x, h);
}

NoisePredictor::ResBlock NoisePredictor::make_block(const std::string& name, std::size_t cin,
                                                    std::size_t cout) {
  ResBlock b;
  b.conv1 = nn::Conv2d(store_, name + ".conv1", cin, cout, 3);
  b.conv2 = nn::Conv2d(store_, name + ".conv2", cout, cout, 3);
  b.time_proj = nn::Linear(store_, name + ".time", time_dim_, cout);
  b.has_skip = cin != cout;
  if (b.has_skip) b.skip = nn::Conv2d(store_, name + ".skip", cin, cout, 1);
  return b;
}

NoisePredictor::NoisePredictor(const PredictorArchitecture& arch, SeededRng init_rng)
    : arch_(arch), store_(std::move(init_rng)) {
  build();
  store_.seal();
  manifest = {{"architecture", arch_}, {"trained", false}};
}

NoisePredictor::NoisePredictor(const PredictorArchitecture& arch, nn::ParamStore store)
    : arch_(arch), store_(std::move(store)) {
  build();
}

NoisePredictor NoisePredictor::zeros(const PredictorArchitecture& arch) {
  NoisePredictor p(arch, SeededRng(0, 0));
  p.store_.fill(0.0);
  p.manifest["zero_weights"] = true;
  return p;
}

void NoisePredictor::build() {
  const std::size_t c = arch_.latent_channels;
  const std::size_t w = arch_.base_width;
  time_dim_ = 2 * w;
  time1_ = nn::Linear(store_, "time.fc1", w, time_dim_);
  time2_ = nn::Linear(store_, "time.fc2", time_dim_, time_dim_);
  in_conv_ = nn::Conv2d(store_, "in", c, w, 3);
  block_hi_ = make_block("down.hi", w, w);
  down1_ = nn::Conv2d(store_, "down.hi.pool", w, 2 * w, 3, 2, 1);
  block_lo_ = make_block("down.lo", 2 * w, 2 * w);
  down2_ = nn::Conv2d(store_, "down.lo.pool", 2 * w, 2 * w, 3, 2, 1);
  block_mid_in_ = make_block("mid.in", 2 * w, 2 * w);
  block_mid_out_ = make_block("mid.out", 2 * w, 2 * w);
  up1_ = nn::ConvTranspose2d(store_, "up.lo.unpool", 2 * w, 2 * w, 4, 2, 1);
  block_up_lo_ = make_block("up.lo", 4 * w, 2 * w);
  up2_ = nn::ConvTranspose2d(store_, "up.hi.unpool", 2 * w, w, 4, 2, 1);
  block_up_hi_ = make_block("up.hi", 2 * w, w);
  // Zero-initialised output layer: training starts from the zero predictor.
  out_conv_.weight = store_.declare_zeros("out.weight", {c, w, 3, 3});
  out_conv_.bias = store_.declare_zeros("out.bias", {c});
  out_conv_.stride = 1;
  out_conv_.pad = 1;

  const std::size_t d = arch_.attention_dim;
  if (arch_.mode == ConditioningMode::additive) {
    w_q_ = store_.declare("attn.w_q", {c + kPositionalFeatures, d}, c + kPositionalFeatures);
    w_v_ = store_.declare("attn.w_v", {arch_.d_embed, c}, arch_.d_embed);
  } else {
    w_q_ = store_.declare("attn.w_q", {2 * w, d}, 2 * w);
    w_v_ = store_.declare("attn.w_v", {arch_.d_embed, 2 * w}, arch_.d_embed);
  }
  w_k_ = store_.declare("attn.w_k", {arch_.d_embed, d}, arch_.d_embed);
}

Var NoisePredictor::attention_features(const Var& z) const {
  const Shape& s = z.shape();
  return nn::concat_channels(z, Var(positional_features(s[0], s[2], s[3])));
}

Var NoisePredictor::backbone(const Var& z, const std::vector<int>& t,
                             const std::vector<const Tensor*>* mid_embeddings) const {
  const Shape& s = z.shape();
  if (s.size() != 4 || s[1] != arch_.latent_channels || s[2] % 4 != 0 || s[3] % 4 != 0) {
    throw DimensionError("noise predictor expects latents (B, " +
                         std::to_string(arch_.latent_channels) +
                         ", H, W) with H, W divisible by 4, got " + shape_to_string(s));
  }
  if (t.size() != s[0]) throw DimensionError("noise predictor: one timestep per item required");
  Var temb(nn::timestep_embedding(t, arch_.base_width, arch_.time_max_frequency,
                                              arch_.time_min_frequency));
  temb = nn::silu(time2_(nn::silu(time1_(temb))));

  Var h = in_conv_(z);
  Var skip_hi = block_hi_(h, temb);
  Var skip_lo = block_lo_(down1_(skip_hi), temb);
  h = block_mid_in_(down2_(skip_lo), temb);
  if (mid_embeddings) {
    h = nn::add(h, nn::cross_attention(h, *mid_embeddings, w_q_, w_k_, w_v_));
  }
  h = block_mid_out_(h, temb);
  h = block_up_lo_(nn::concat_channels(up1_(h), skip_lo), temb);
  h = block_up_hi_(nn::concat_channels(up2_(h), skip_hi), temb);
  return out_conv_(nn::silu(h));
}

Var NoisePredictor::forward(const Var& z, const std::vector<int>& t,
                            const std::vector<const Tensor*>& embeddings) const {
  if (embeddings.size() != z.shape().at(0)) {
    throw DimensionError("noise predictor: one embedding per item required");
  }
  for (const Tensor* e : embeddings) {
    if (e->rank() != 2 || e->dim(1) != arch_.d_embed) {
      throw DimensionError("noise predictor: embedding must be (tokens, " +
                           std::to_string(arch_.d_embed) + ")");
    }
  }
  if (arch_.mode == ConditioningMode::midblock) return backbone(z, t, &embeddings);
  Var f = backbone(z, t, nullptr);
  return nn::add(f, nn::cross_attention(attention_features(z), embeddings, w_q_, w_k_, w_v_));
}

LatentTensor NoisePredictor::predict_noise(const LatentTensor& z, int t,
                                           const TextEmbedding& e) const {
  Shape s = z.values.shape();
  if (s.size() != 3) throw DimensionError("latent must have shape (C', H', W')");
  s.insert(s.begin(), 1);
  nn::NoGradGuard guard;
  Var out = forward(Var(z.values.reshaped(s)), {t}, {&e.vectors});
  return LatentTensor{batch_item(out.value(), 0)};
}

NoisePredictor::Pair NoisePredictor::predict_pair(
    const Tensor& z, const std::vector<int>& t,
    const std::vector<const TextEmbedding*>& cond) const {
  nn::NoGradGuard guard;
  const std::size_t batch = z.dim(0);
  if (cond.size() != batch) throw DimensionError("predict_pair: one embedding per item required");
  const Tensor null_vec({1, arch_.d_embed}, 0.0);
  std::vector<const Tensor*> null_ptrs(batch, &null_vec), cond_ptrs;
  for (const TextEmbedding* e : cond) cond_ptrs.push_back(&e->vectors);

  if (arch_.mode == ConditioningMode::additive) {
    // The backbone ignores the key, so one evaluation serves both branches.
    const Var zv(z);
    const Tensor f = backbone(zv, t, nullptr).value();
    const Var feat = attention_features(zv);
    Pair p;
    p.uncond = f + nn::cross_attention(feat, null_ptrs, w_q_, w_k_, w_v_).value();
    p.cond = f + nn::cross_attention(feat, cond_ptrs, w_q_, w_k_, w_v_).value();
    return p;
  }
  std::vector<Tensor> both{z, z};
  Shape s = z.shape();
  Tensor zz = stack(both);
  s[0] = 2 * batch;
  zz = zz.reshaped(s);
  std::vector<int> tt(t);
  tt.insert(tt.end(), t.begin(), t.end());
  std::vector<const Tensor*> ee(null_ptrs);
  ee.insert(ee.end(), cond_ptrs.begin(), cond_ptrs.end());
  const Tensor out = forward(Var(zz), tt, ee).value();
  const std::size_t n = z.size();
  Pair p{Tensor(z.shape()), Tensor(z.shape())};
  std::copy(out.data(), out.data() + n, p.uncond.data());
  std::copy(out.data() + n, out.data() + 2 * n, p.cond.data());
  return p;
}

ConditioningParams NoisePredictor::conditioning() const {
  return ConditioningParams{w_q_.value(), w_k_.value(), w_v_.value()};
}

void NoisePredictor::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  store_.save(dir / "params");
  nlohmann::json doc = manifest;
  doc["architecture"] = arch_;
  doc["parameter_count"] = store_.parameter_count();
  write_json_file(dir / "manifest.json", doc);
}

NoisePredictor NoisePredictor::load(const std::filesystem::path& dir) {
  const nlohmann::json doc = read_json_file(dir / "manifest.json");
  NoisePredictor p(doc.at("architecture").get<PredictorArchitecture>(),
                   nn::ParamStore::load(dir / "params"));
  p.manifest = doc;
  return p;
}

}  // namespace semstego::diffusion
