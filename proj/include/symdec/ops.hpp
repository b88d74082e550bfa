#ifndef SYMDEC_OPS_HPP
#define SYMDEC_OPS_HPP

#include <vector>

#include "symdec/autodiff.hpp"

/// Differentiable primitives used by the encoder, decoder and losses. Each function builds one
/// graph node from a registered AdjointRule; the *_rule factories expose the rules themselves.
namespace symdec::ops {

template <typename S> using Var = ad::Var<S>;
template <typename S> using RulePtr = ad::RulePtr<S>;

template <typename S> RulePtr<S> matmul_rule();
template <typename S> RulePtr<S> add_rule();
template <typename S> RulePtr<S> add_row_rule();
template <typename S> RulePtr<S> mul_row_rule();
template <typename S> RulePtr<S> scale_rule(double factor);
template <typename S> RulePtr<S> layer_norm_rule(double eps = 1e-5);
template <typename S> RulePtr<S> gelu_rule();
template <typename S> RulePtr<S> relu_rule();
template <typename S> RulePtr<S> sigmoid_rule();
template <typename S> RulePtr<S> attention_rule(int heads);
template <typename S> RulePtr<S> select_row_rule(Index row);
template <typename S> RulePtr<S> softmax_rule();
template <typename S> RulePtr<S> aggregate_rule();
template <typename S> RulePtr<S> to_grid_rule();
template <typename S> RulePtr<S> lift_rule(int n);
template <typename S> RulePtr<S> gconv_rule(int n);
template <typename S> RulePtr<S> resize_rule(Index rows, Index cols);
template <typename S> RulePtr<S> mean_axis0_rule();
template <typename S> RulePtr<S> reshape_rule(Shape shape);
template <typename S> RulePtr<S> focal_logits_rule(Tensor<S> target, double alpha, double lambda, double eps);
template <typename S> RulePtr<S> mse_rule();

/// A[N,K] · B[K,M].
template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
/// X[N,C] + b (b has C entries, shape [C] or [1,C]), broadcast over rows.
template <typename S> Var<S> add_row(const Var<S>& x, const Var<S>& b);
/// X[N,C] ⊙ g, broadcast over rows.
template <typename S> Var<S> mul_row(const Var<S>& x, const Var<S>& g);
template <typename S> Var<S> scale(const Var<S>& x, double factor);
/// Row-wise layer normalisation followed by the affine map (gain, shift).
template <typename S> Var<S> layer_norm(const Var<S>& x, const Var<S>& gain, const Var<S>& shift, double eps = 1e-5);
template <typename S> Var<S> gelu(const Var<S>& x);
template <typename S> Var<S> relu(const Var<S>& x);
template <typename S> Var<S> sigmoid(const Var<S>& x);
/// Multi-head scaled dot-product self-attention on already-projected Q, K, V [N, C].
template <typename S> Var<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads);
/// Row `row` of X[T,D] as [1,D].
template <typename S> Var<S> select_row(const Var<S>& x, Index row);
template <typename S> Var<S> softmax(const Var<S>& logits);
/// Σ_t w_t · X_t for equally shaped X_t and simplex weights w [T].
template <typename S> Var<S> aggregate(const std::vector<Var<S>>& xs, const Var<S>& weights);
/// Tokens [M·M, d] (row-major over (i,j)) to feature map [d, M, M].
template <typename S> Var<S> to_grid(const Var<S>& tokens);
/// Copies F [d,M,M] into every one of the n rotation slots: [n, d, M, M].
template <typename S> Var<S> lift(const Var<S>& f, int n);
/// Group convolution on Z² ⋊ C_n with 3x3 support, zero padding, filters [Co,Ci,n,3,3], bias [Co].
template <typename S> Var<S> gconv(const Var<S>& x, const Var<S>& filters, const Var<S>& bias, int n);
/// Bilinear (corners-aligned) resize of the last two axes.
template <typename S> Var<S> resize(const Var<S>& x, Index rows, Index cols);
template <typename S> Var<S> mean_axis0(const Var<S>& x);
template <typename S> Var<S> reshape(const Var<S>& x, Shape shape);
/// α-focal loss summed over pixels, evaluated from logits; result shape [1].
template <typename S> Var<S> focal_loss_logits(const Var<S>& logits, const Tensor<S>& target, double alpha,
                                               double lambda, double eps);
/// Mean squared difference, shape [1].
template <typename S> Var<S> mse(const Var<S>& a, const Var<S>& b);

/// 9x9 linear maps taking a 3x3 kernel ψ to its rotated copy ψ(r_{-θ}·) for each slot θ = s·360°/n.
/// Built as rot90^q ∘ bilinear(α) with θ = 90°q + α, α ∈ [0°, 90°).
std::vector<Eigen::Matrix<double, 9, 9>> filter_rotations(int n);

/// Values of 3x3 kernel taps in row-major order, offsets (dx, dy) ∈ {-1,0,1}².
inline constexpr int kTaps = 9;

}  // namespace symdec::ops

#endif  // SYMDEC_OPS_HPP
