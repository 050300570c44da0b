#include "semstego/diffusion/attention.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "semstego/core/error.hpp"

namespace semstego::diffusion {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
}  // namespace

AttentionResult cross_attention(const Tensor& z_feat, const TextEmbedding& embedding,
                                const ConditioningParams& params) {
  const Tensor& e = embedding.vectors;
  if (z_feat.rank() != 2 || e.rank() != 2 || params.w_q.rank() != 2 || params.w_k.rank() != 2 ||
      params.w_v.rank() != 2) {
    throw DimensionError("cross_attention: all operands must be matrices");
  }
  if (z_feat.dim(1) != params.w_q.dim(0) || e.dim(1) != params.w_k.dim(0) ||
      e.dim(1) != params.w_v.dim(0) || params.w_q.dim(1) != params.w_k.dim(1)) {
    throw DimensionError("cross_attention: operand shapes are inconsistent");
  }
  const std::size_t n = z_feat.dim(0), tokens = e.dim(0), dv = params.w_v.dim(1);
  const ConstMap x(z_feat.data(), n, z_feat.dim(1));
  const ConstMap em(e.data(), tokens, e.dim(1));
  const RowMat q = x * ConstMap(params.w_q.data(), params.w_q.dim(0), params.w_q.dim(1));
  const RowMat k = em * ConstMap(params.w_k.data(), params.w_k.dim(0), params.w_k.dim(1));
  const RowMat v = em * ConstMap(params.w_v.data(), params.w_v.dim(0), dv);
  RowMat a = (q * k.transpose()) / std::sqrt(static_cast<double>(params.d()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    a.row(i).array() -= a.row(i).maxCoeff();
    a.row(i) = a.row(i).array().exp().matrix();
    a.row(i) /= a.row(i).sum();
  }
  const RowMat out = a * v;
  AttentionResult r{Tensor({n, dv}), Tensor({n, tokens})};
  std::copy(out.data(), out.data() + out.size(), r.output.data());
  std::copy(a.data(), a.data() + a.size(), r.weights.data());
  return r;
}

}  // namespace semstego::diffusion
