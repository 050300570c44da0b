#include "semstego/semcom/jscc.hpp"

#include <cmath>
#include <numeric>

#include "semstego/core/error.hpp"

namespace semstego::semcom {

using nn::Var;

namespace {

constexpr std::size_t kDownsample = 4;

}  // namespace

std::size_t JsccArchitecture::symbol_count() const {
  const std::size_t source = image_channels * image_size * image_size;
  if (ratio_den == 0 || (source * ratio_num) % ratio_den != 0) {
    throw RangeError("compression ratio " + std::to_string(ratio_num) + "/" +
                     std::to_string(ratio_den) + " does not give an integer symbol count for " +
                     std::to_string(source) + " source values");
  }
  return source * ratio_num / ratio_den;
}

std::size_t JsccArchitecture::symbol_channels() const {
  if (image_size % kDownsample != 0) throw RangeError("JSCC image size must be divisible by 4");
  const std::size_t grid = (image_size / kDownsample) * (image_size / kDownsample);
  const std::size_t k = symbol_count();
  if (k % grid != 0) {
    throw RangeError("symbol count " + std::to_string(k) + " does not tile the " +
                     std::to_string(grid) + "-cell feature grid");
  }
  return k / grid;
}

void to_json(nlohmann::json& j, const JsccArchitecture& a) {
  j = nlohmann::json{{"name", a.name},
                     {"width", a.width},
                     {"depth", a.depth},
                     {"image_channels", a.image_channels},
                     {"image_size", a.image_size},
                     {"ratio_num", a.ratio_num},
                     {"ratio_den", a.ratio_den}};
}

void from_json(const nlohmann::json& j, JsccArchitecture& a) {
  a.name = j.at("name").get<std::string>();
  a.width = j.at("width").get<std::size_t>();
  a.depth = j.at("depth").get<std::size_t>();
  a.image_channels = j.at("image_channels").get<std::size_t>();
  a.image_size = j.at("image_size").get<std::size_t>();
  a.ratio_num = j.at("ratio_num").get<std::size_t>();
  a.ratio_den = j.at("ratio_den").get<std::size_t>();
}

JsccArchitecture make_jscc_architecture(const JsccCodecSettings& codec, const JsccSettings& jscc,
                                        std::size_t image_channels, std::size_t image_size) {
  JsccArchitecture a;
  a.name = codec.name;
  a.width = codec.width;
  a.depth = codec.depth;
  a.image_channels = image_channels;
  a.image_size = image_size;
  a.ratio_num = jscc.ratio_num;
  a.ratio_den = jscc.ratio_den;
  a.symbol_channels();
  return a;
}

Var JsccCodec::ResBlock::operator()(const Var& x) const {
  return nn::add(x, b(nn::silu(a(nn::silu(x)))));
}

JsccCodec::JsccCodec(const JsccArchitecture& arch, SeededRng init_rng)
    : arch_(arch), store_(std::move(init_rng)) {
  build();
  store_.seal();
  manifest = {{"architecture", arch_}, {"trained", false}};
}

JsccCodec::JsccCodec(const JsccArchitecture& arch, nn::ParamStore store)
    : arch_(arch), store_(std::move(store)) {
  build();
}

void JsccCodec::build() {
  const std::size_t w = arch_.width, c = arch_.image_channels, cs = arch_.symbol_channels();
  auto blocks = [&](const std::string& prefix, std::vector<ResBlock>& out) {
    for (std::size_t d = 0; d < arch_.depth; ++d) {
      const std::string p = prefix + std::to_string(d);
      out.push_back({nn::Conv2d(store_, p + ".a", w, w, 3), nn::Conv2d(store_, p + ".b", w, w, 3)});
    }
  };
  enc_in_ = nn::Conv2d(store_, "enc.in", c, w, 3);
  enc_down1_ = nn::Conv2d(store_, "enc.down1", w, w, 4, 2, 1);
  blocks("enc.hi", enc_hi_);
  enc_down2_ = nn::Conv2d(store_, "enc.down2", w, w, 4, 2, 1);
  blocks("enc.lo", enc_lo_);
  enc_out_ = nn::Conv2d(store_, "enc.out", w, cs, 3);

  dec_in_ = nn::Conv2d(store_, "dec.in", cs, w, 3);
  blocks("dec.lo", dec_lo_);
  dec_up1_ = nn::ConvTranspose2d(store_, "dec.up1", w, w, 4, 2, 1);
  blocks("dec.hi", dec_hi_);
  dec_up2_ = nn::ConvTranspose2d(store_, "dec.up2", w, w, 4, 2, 1);
  dec_out_ = nn::Conv2d(store_, "dec.out", w, c, 3);
}

Var JsccCodec::encode_graph(const Var& images) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != arch_.image_channels || s[2] != arch_.image_size ||
      s[3] != arch_.image_size) {
    throw DimensionError("JSCC codec expects images (B, " + std::to_string(arch_.image_channels) +
                         ", " + std::to_string(arch_.image_size) + ", " +
                         std::to_string(arch_.image_size) + "), got " + shape_to_string(s));
  }
  Var h = nn::silu(enc_in_(images));
  h = enc_down1_(h);
  for (const ResBlock& b : enc_hi_) h = b(h);
  h = enc_down2_(nn::silu(h));
  for (const ResBlock& b : enc_lo_) h = b(h);
  h = enc_out_(nn::silu(h));
  return nn::power_normalize(nn::reshape(h, {s[0], symbol_count()}));
}

Var JsccCodec::decode_graph(const Var& symbols) const {
  const Shape& s = symbols.shape();
  if (s.size() != 2 || s[1] != symbol_count()) {
    throw DimensionError("JSCC decoder expects (B, " + std::to_string(symbol_count()) +
                         ") symbols, got " + shape_to_string(s));
  }
  const std::size_t g = arch_.image_size / kDownsample;
  Var h = dec_in_(nn::reshape(symbols, {s[0], arch_.symbol_channels(), g, g}));
  for (const ResBlock& b : dec_lo_) h = b(h);
  h = dec_up1_(nn::silu(h));
  for (const ResBlock& b : dec_hi_) h = b(h);
  h = nn::silu(dec_up2_(nn::silu(h)));
  return nn::sigmoid(dec_out_(h));
}

Tensor JsccCodec::encode_batch(const Tensor& images) const {
  nn::NoGradGuard guard;
  return encode_graph(Var(images)).value();
}

Tensor JsccCodec::decode_batch(const Tensor& symbols) const {
  nn::NoGradGuard guard;
  return clamp(decode_graph(Var(symbols)).value(), 0.0, 1.0);
}

void JsccCodec::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  store_.save(dir / "params");
  nlohmann::json doc = manifest;
  doc["architecture"] = arch_;
  doc["snr_train_db"] = snr_train_db;
  doc["symbol_count"] = symbol_count();
  doc["parameter_count"] = store_.parameter_count();
  write_json_file(dir / "manifest.json", doc);
}

JsccCodec JsccCodec::load(const std::filesystem::path& dir) {
  const nlohmann::json doc = read_json_file(dir / "manifest.json");
  JsccCodec codec(doc.at("architecture").get<JsccArchitecture>(),
                  nn::ParamStore::load(dir / "params"));
  codec.snr_train_db = doc.value("snr_train_db", 0.0);
  codec.manifest = doc;
  return codec;
}

SymbolVector sem_encode(const ImageTensor& image, const JsccCodec& codec) {
  Shape s = image.pixels.shape();
  s.insert(s.begin(), 1);
  const Tensor out = codec.encode_batch(image.pixels.reshaped(s));
  return SymbolVector::from_tensor(out.reshaped({codec.symbol_count()}));
}

ImageTensor sem_decode(const SymbolVector& symbols, const JsccCodec& codec) {
  if (symbols.symbols.size() != codec.symbol_count()) {
    throw DimensionError("sem_decode expects " + std::to_string(codec.symbol_count()) +
                         " symbols, got " + std::to_string(symbols.symbols.size()));
  }
  const Tensor img = codec.decode_batch(symbols.symbols.reshaped({1, codec.symbol_count()}));
  return ImageTensor::from_tensor(batch_item(img, 0));
}

namespace {

Tensor gather(const std::vector<ImageTensor>& images, const std::vector<std::size_t>& order,
              std::size_t begin, std::size_t end) {
  std::vector<Tensor> items;
  for (std::size_t i = begin; i < end; ++i) items.push_back(images[order[i]].pixels);
  return stack(items);
}

double mean_mse(const JsccCodec& codec, const std::vector<ImageTensor>& images, double snr_db,
                std::uint64_t seed, std::uint64_t stream_id, double* mean_psnr) {
  SeededRng rng(seed, stream_id);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  double sq = 0.0, psnr_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < images.size(); b += 64) {
    const Tensor x = gather(images, order, b, std::min(images.size(), b + 64));
    const Tensor y = codec.decode_batch(awgn(codec.encode_batch(x), snr_db, 1.0, rng));
    const std::size_t n = x.size() / x.dim(0);
    for (std::size_t i = 0; i < x.dim(0); ++i) {
      double e = 0.0;
      for (std::size_t j = i * n; j < (i + 1) * n; ++j) e += (x[j] - y[j]) * (x[j] - y[j]);
      sq += e;
      e /= static_cast<double>(n);
      psnr_sum += e > 0.0 ? std::min(100.0, -10.0 * std::log10(e)) : 100.0;
    }
    count += x.size();
  }
  if (mean_psnr) *mean_psnr = psnr_sum / static_cast<double>(images.size());
  return sq / static_cast<double>(count);
}

}  // namespace

double evaluate_jscc_psnr(const JsccCodec& codec, const std::vector<ImageTensor>& images,
                          double snr_db, std::uint64_t seed, std::uint64_t stream_id) {
  if (images.empty()) throw RangeError("evaluate_jscc_psnr: no images");
  double psnr = 0.0;
  mean_mse(codec, images, snr_db, seed, stream_id, &psnr);
  return psnr;
}

JsccCodec train_jscc(const std::vector<ImageTensor>& train,
                     const std::vector<ImageTensor>& validation, const JsccArchitecture& arch,
                     double snr_train_db, const JsccTrainOptions& options) {
  if (train.empty()) throw RangeError("train_jscc: empty dataset");
  noise_variance(snr_train_db);
  const JsccSettings& s = options.settings;
  JsccCodec codec(arch, SeededRng(options.seed, make_stream_id(StreamStage::jscc_init, 0)));
  codec.snr_train_db = snr_train_db;
  SeededRng order_rng(options.seed, make_stream_id(StreamStage::jscc_train, 0));
  SeededRng noise_rng(options.seed, make_stream_id(StreamStage::jscc_train, 1));
  const std::uint64_t val_stream = make_stream_id(StreamStage::jscc_train, 2);
  nn::Adam opt(codec.params(), nn::AdamConfig{.learning_rate = s.learning_rate});
  const std::vector<ImageTensor>& val = validation.empty() ? train : validation;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, s.batch_size);
  const double sd = std::sqrt(noise_variance(snr_train_db));
  nlohmann::json history = nlohmann::json::array();

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    const double progress = s.epochs > 1 ? static_cast<double>(epoch) / (s.epochs - 1) : 0.0;
    opt.set_learning_rate(s.learning_rate * (0.55 + 0.45 * std::cos(M_PI * progress)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[order_rng.uniform_index(i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const Tensor x = gather(train, order, b, std::min(order.size(), b + batch));
      Var sym = codec.encode_graph(Var(x));
      const Tensor noise = sd * gaussian_sample(noise_rng, sym.shape());
      Var loss = nn::mse_loss(codec.decode_graph(nn::add(sym, Var(noise))), x);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingDivergedError("JSCC loss became non-finite at epoch " +
                                    std::to_string(epoch + 1));
      }
      loss.backward();
      opt.step();
      loss_sum += value;
      ++batches;
    }
    double val_psnr = 0.0;
    const double val_mse = mean_mse(codec, val, snr_train_db, options.seed, val_stream, &val_psnr);
    history.push_back({{"epoch", epoch + 1},
                       {"train_loss", loss_sum / static_cast<double>(batches)},
                       {"val_mse", val_mse},
                       {"val_psnr_db", val_psnr}});
  }

  codec.manifest = {{"architecture", arch},
                    {"trained", s.epochs > 0},
                    {"dataset_id", options.dataset_id},
                    {"seed", options.seed},
                    {"snr_train_db", snr_train_db},
                    {"symbol_count", arch.symbol_count()},
                    {"compression_ratio", std::to_string(arch.ratio_num) + "/" +
                                              std::to_string(arch.ratio_den)},
                    {"epochs", s.epochs},
                    {"batch_size", s.batch_size},
                    {"learning_rate", s.learning_rate},
                    {"history", history}};
  return codec;
}

}  // namespace semstego::semcom
