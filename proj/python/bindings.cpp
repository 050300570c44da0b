#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "semstego/core/array_io.hpp"
#include "semstego/core/config.hpp"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/diffusion/ddim.hpp"
#include "semstego/diffusion/schedule.hpp"
#include "semstego/keygen/keygen.hpp"
#include "semstego/metrics/metrics.hpp"
#include "semstego/pipeline/models.hpp"
#include "semstego/pipeline/sweep.hpp"
#include "semstego/semcom/channel.hpp"
#include "semstego/vae/vae.hpp"

namespace py = pybind11;
using namespace semstego;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (a.ndim() == 0) shape = {1};
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

ImageTensor to_image(const Array& a) { return ImageTensor::from_tensor(to_tensor(a)); }

RunConfig config_from_json(const std::string& text) {
  RunConfig cfg = text.empty() ? RunConfig{} : nlohmann::json::parse(text).get<RunConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the semstego steganographic semantic-communication simulator";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<InvalidKeyError>(m, "InvalidKeyError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_FileNotFoundError);

  m.def("default_config_json", [] { return nlohmann::json(RunConfig{}).dump(); });
  m.def("validate_config_json", [](const std::string& text) {
    return nlohmann::json(config_from_json(text)).dump();
  });

  m.def("load_array", [](const std::string& path) { return to_array(load_array(path)); });
  m.def("save_array", [](const std::string& path, const Array& a) { save_array(path, to_tensor(a)); });

  m.def("mse", [](const Array& x, const Array& y) { return metrics::mse(to_tensor(x), to_tensor(y)); });
  m.def("psnr", [](const Array& x, const Array& y) { return metrics::psnr(to_image(x), to_image(y)); });
  m.def("psnr_from_mse", &metrics::psnr_from_mse, py::arg("mse"), py::arg("max_i") = 1.0);
  m.def("ssim", [](const Array& x, const Array& y) { return metrics::ssim(to_image(x), to_image(y)); });
  m.def("lpips", [](const Array& x, const Array& y) {
    static const metrics::FeatureExtractor phi = metrics::make_feature_extractor({});
    return metrics::lpips_distance(to_image(x), to_image(y), phi);
  });

  m.def("noise_variance", &semcom::noise_variance, py::arg("snr_db"));
  m.def(
      "awgn",
      [](const Array& symbols, double snr_db, std::uint64_t seed, std::uint64_t stream, double h) {
        SeededRng rng(seed, stream);
        return to_array(semcom::awgn(to_tensor(symbols), snr_db, h, rng));
      },
      py::arg("symbols"), py::arg("snr_db"), py::arg("seed") = 0, py::arg("stream") = 0,
      py::arg("h") = 1.0);
  m.def("empirical_snr_db", [](const Array& sent, const Array& received, double h) {
    return semcom::empirical_snr_db(to_tensor(sent), to_tensor(received), h);
  }, py::arg("sent"), py::arg("received"), py::arg("h") = 1.0);

  m.def("alpha_bars", [](int t, double b0, double b1) {
    return diffusion::make_schedule(t, b0, b1).alpha_bars;
  }, py::arg("train_timesteps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);
  m.def("ddim_timesteps", &diffusion::ddim_timesteps);
  m.def("ddim_forward_step", [](const Array& z, double a_t, double a_next, const Array& eps) {
    return to_array(diffusion::ddim_forward_step(to_tensor(z), a_t, a_next, to_tensor(eps)));
  });
  m.def("ddim_reverse_step", [](const Array& z, double a_t, double a_prev, const Array& eps) {
    return to_array(diffusion::ddim_reverse_step(to_tensor(z), a_t, a_prev, to_tensor(eps)));
  });
  m.def("cfg_combine", [](const Array& u, const Array& c, double beta) {
    return to_array(diffusion::cfg_combine(to_tensor(u), to_tensor(c), beta));
  });
  m.def("kl_divergence", [](const Array& mu, const Array& log_var) {
    return vae::kl_divergence({to_tensor(mu), to_tensor(log_var)});
  });

  m.def("key_tokens", [](const std::string& text) { return keygen::KeyPrompt::from_text(text).tokens; });

  m.def(
      "sweep_csv",
      [](const std::string& config_json, std::vector<double> snr_train,
         std::vector<double> snr_test, const std::string& codec, std::size_t images) {
        const RunConfig cfg = config_from_json(config_json);
        const pipeline::Models models = pipeline::load_models(cfg);
        pipeline::SweepOptions opt{std::move(snr_train), std::move(snr_test), codec, images};
        py::gil_scoped_release release;
        return pipeline::format_results_csv(pipeline::sweep_snr(cfg, opt, models).rows);
      },
      py::arg("config_json"), py::arg("snr_train"), py::arg("snr_test"), py::arg("codec") = "small",
      py::arg("images") = 4);
}
