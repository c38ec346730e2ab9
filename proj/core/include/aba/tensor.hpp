#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace aba {

// Deterministic random source. The generator is std::mt19937_64, whose raw
// 64-bit output sequence is fixed by the C++ standard, so the same seed gives
// the same draws on every platform. Derived draws avoid std::*_distribution
// (those are implementation-defined): uniform() takes the top 53 bits of one
// raw output, uniform_int() reduces one raw output modulo n.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1): (next_u64() >> 11) * 2^-53.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [0, n). Modulo reduction; the bias is negligible for
    // the corpus sizes used here and keeps the draw sequence platform-fixed.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

private:
    std::mt19937_64 gen_;
};

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
// Ops record parents and a backward_fn on their output; backward() walks the
// graph in reverse topological order and then consumes it (edges cleared).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until ensure_grad(); same length as data

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() { grad.assign(data.size(), 0.0); }

    static TensorPtr create(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr ones(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static TensorPtr from(std::vector<std::size_t> shape, std::vector<double> values,
                          bool requires_grad = false);
    static TensorPtr uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng,
                             bool requires_grad = false);
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Scoped switch that stops ops from recording the autodiff graph.
// Used for evaluation passes; nests.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- differentiable operations -------------------------------------------

// Standard matrix product, a [m x k] times b [k x n].
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

TensorPtr transpose(const TensorPtr& x);

// Elementwise sum. b may also be [d] or [1 x d] against an [l x d] a,
// broadcast over rows. No other broadcasting.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);

// Elementwise product, same broadcast rule as add().
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);

TensorPtr scale(const TensorPtr& x, double factor);

// Concatenate [l x d_i] parts along the feature axis into [l x sum(d_i)].
TensorPtr concat_features(const std::vector<TensorPtr>& parts);

// Row-wise softmax with per-row max subtraction.
TensorPtr softmax_rows(const TensorPtr& x);

// Column-wise softmax. Implemented as transpose(softmax_rows(transpose(x)))
// so each column runs exactly the same float operations as the corresponding
// row of the transpose; the two routes agree bit-for-bit.
TensorPtr softmax_cols(const TensorPtr& x);

TensorPtr relu(const TensorPtr& x);

// Per-row normalization to zero mean / unit variance followed by an affine
// transform. gamma and beta are [d] vectors.
TensorPtr layer_norm_rows(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                          double eps = 1e-5);

// Inverted dropout: in training mode each element is zeroed with probability
// rate and survivors are scaled by 1/(1-rate); in eval mode the input is
// returned unchanged.
TensorPtr dropout(const TensorPtr& x, double rate, bool training, Rng& rng);

// Rows of table selected by id; gradient scatters back into the table.
TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids);

// Sum of all elements, as a [1] tensor.
TensorPtr sum_all(const TensorPtr& x);

// Cross-entropy of softmax(logits) against a gold index. logits are treated
// as a flat vector; computed via log-sum-exp.
TensorPtr cross_entropy(const TensorPtr& logits, std::size_t gold);

// Same elements under a new shape of equal total size.
TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> shape);

// Forward-only column slice [begin, end); does not participate in autodiff.
TensorPtr slice_cols(const TensorPtr& x, std::size_t begin, std::size_t end);

// Backpropagate from a scalar loss. Populates grad on every reachable tensor
// with requires_grad, then consumes the graph (parents and backward_fn are
// cleared on all visited nodes).
void backward(const TensorPtr& loss);

}  // namespace aba
