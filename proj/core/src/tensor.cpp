#include "aba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "aba/error.hpp"

namespace aba {

namespace {

thread_local int no_grad_depth = 0;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

bool track(const TensorPtr& a) { return grad_enabled() && a->requires_grad; }
bool track(const TensorPtr& a, const TensorPtr& b) {
    return grad_enabled() && (a->requires_grad || b->requires_grad);
}

void require_matrix(const TensorPtr& x, const char* op) {
    if (x->shape.size() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(x->shape));
}

// Broadcast check for add/mul: returns true when b is [d] or [1 x d] against
// an [l x d] a with l > 1 (or a rank-2 a in general).
bool row_broadcastable(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2) return false;
    std::size_t d = a->shape[1];
    if (b->shape.size() == 1 && b->shape[0] == d) return true;
    if (b->shape.size() == 2 && b->shape[0] == 1 && b->shape[1] == d) return true;
    return false;
}

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorPtr Tensor::create(std::vector<std::size_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(shape_product(t->shape), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return create(std::move(shape), requires_grad);
}

TensorPtr Tensor::ones(std::vector<std::size_t> shape, bool requires_grad) {
    return full(std::move(shape), 1.0, requires_grad);
}

TensorPtr Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    if (values.size() != shape_product(t->shape))
        throw DimensionError("from: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(t->shape));
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng,
                          bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    for (double& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a->shape[1] != b->shape[0])
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a->shape) +
                             " vs " + shape_str(b->shape));
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = Tensor::create({m, n}, track(a, b));

    const double* A = a->data.data();
    const double* B = b->data.data();
    double* C = out->data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }

    if (out->requires_grad) {
        out->parents = {a, b};
        out->backward_fn = [a, b, out, m, k, n]() {
            const double* G = out->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                // dA[i][p] = sum_j dC[i][j] * B[p][j]
                double* dA = a->grad.data();
                const double* B = b->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* grow = G + i * n;
                        const double* brow = B + p * n;
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                        dA[i * k + p] += s;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                // dB = A^T * dC
                double* dB = b->grad.data();
                const double* A = a->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[i * k + p];
                        const double* grow = G + i * n;
                        double* drow = dB + p * n;
                        for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
                    }
            }
        };
    }
    return out;
}

TensorPtr transpose(const TensorPtr& x) {
    require_matrix(x, "transpose");
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = Tensor::create({n, m}, track(x));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->data[j * m + i] = x->data[i * n + j];

    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out, m, n]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += out->grad[j * m + i];
        };
    }
    return out;
}

namespace {

enum class Combine { Add, Mul };

TensorPtr binary_elementwise(const TensorPtr& a, const TensorPtr& b, Combine op,
                             const char* name) {
    const bool broadcast = a->shape != b->shape;
    if (broadcast && !row_broadcastable(a, b))
        throw DimensionError(std::string(name) + ": shapes " + shape_str(a->shape) + " and " +
                             shape_str(b->shape) + " neither match nor row-broadcast");

    auto out = Tensor::create(a->shape, track(a, b));
    const std::size_t n = a->size();
    const std::size_t d = broadcast ? a->shape[1] : 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double bv = broadcast ? b->data[i % d] : b->data[i];
        out->data[i] = op == Combine::Add ? a->data[i] + bv : a->data[i] * bv;
    }

    if (out->requires_grad) {
        out->parents = {a, b};
        out->backward_fn = [a, b, out, op, broadcast, n, d]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const double bv = broadcast ? b->data[i % d] : b->data[i];
                    a->grad[i] += op == Combine::Add ? out->grad[i] : out->grad[i] * bv;
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t bi = broadcast ? i % d : i;
                    b->grad[bi] += op == Combine::Add ? out->grad[i] : out->grad[i] * a->data[i];
                }
            }
        };
    }
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_elementwise(a, b, Combine::Add, "add");
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_elementwise(a, b, Combine::Mul, "mul");
}

TensorPtr scale(const TensorPtr& x, double factor) {
    auto out = Tensor::create(x->shape, track(x));
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] * factor;
    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out, factor]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * factor;
        };
    }
    return out;
}

TensorPtr concat_features(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_features: empty part list");
    const std::size_t l = parts[0]->rows();
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_matrix(p, "concat_features");
        if (p->shape[0] != l)
            throw DimensionError("concat_features: first dimensions disagree, " +
                                 shape_str(parts[0]->shape) + " vs " + shape_str(p->shape));
        total += p->shape[1];
        rg = rg || p->requires_grad;
    }

    auto out = Tensor::create({l, total}, grad_enabled() && rg);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t d = p->shape[1];
        for (std::size_t i = 0; i < l; ++i)
            std::copy_n(p->data.data() + i * d, d, out->data.data() + i * total + offset);
        offset += d;
    }

    if (out->requires_grad) {
        out->parents = parts;
        out->backward_fn = [parts, out, l, total]() {
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t d = p->shape[1];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t i = 0; i < l; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            p->grad[i * d + j] += out->grad[i * total + offset + j];
                }
                offset += d;
            }
        };
    }
    return out;
}

TensorPtr softmax_rows(const TensorPtr& x) {
    require_matrix(x, "softmax_rows");
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = Tensor::create({m, n}, track(x));
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x->data.data() + i * n;
        double* yi = out->data.data() + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (std::size_t j = 0; j < n; ++j) yi[j] /= sum;
    }

    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out, m, n]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* yi = out->data.data() + i * n;
                const double* gi = out->grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += yi[j] * gi[j];
                for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += yi[j] * (gi[j] - dot);
            }
        };
    }
    return out;
}

TensorPtr softmax_cols(const TensorPtr& x) {
    require_matrix(x, "softmax_cols");
    return transpose(softmax_rows(transpose(x)));
}

TensorPtr relu(const TensorPtr& x) {
    auto out = Tensor::create(x->shape, track(x));
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = std::max(x->data[i], 0.0);
    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i)
                if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
        };
    }
    return out;
}

TensorPtr layer_norm_rows(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                          double eps) {
    require_matrix(x, "layer_norm_rows");
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (gamma->size() != n || beta->size() != n)
        throw DimensionError("layer_norm_rows: affine params " + shape_str(gamma->shape) + "/" +
                             shape_str(beta->shape) + " do not match width of " +
                             shape_str(x->shape));

    const bool rg =
        grad_enabled() && (x->requires_grad || gamma->requires_grad || beta->requires_grad);
    auto out = Tensor::create({m, n}, rg);
    std::vector<double> mean(m), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x->data.data() + i * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += xi[j];
        mean[i] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xi[j] - mean[i];
            v += d * d;
        }
        inv_std[i] = 1.0 / std::sqrt(v / static_cast<double>(n) + eps);
        for (std::size_t j = 0; j < n; ++j)
            out->data[i * n + j] = gamma->data[j] * (xi[j] - mean[i]) * inv_std[i] + beta->data[j];
    }

    if (out->requires_grad) {
        out->parents = {x, gamma, beta};
        out->backward_fn = [x, gamma, beta, out, m, n, mean, inv_std]() {
            for (std::size_t i = 0; i < m; ++i) {
                const double* xi = x->data.data() + i * n;
                const double* gi = out->grad.data() + i * n;
                double sum_dyg = 0.0, sum_dyg_xn = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double xn = (xi[j] - mean[i]) * inv_std[i];
                    sum_dyg += gi[j] * gamma->data[j];
                    sum_dyg_xn += gi[j] * gamma->data[j] * xn;
                }
                const double mean_dyg = sum_dyg / static_cast<double>(n);
                const double mean_dyg_xn = sum_dyg_xn / static_cast<double>(n);
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) {
                        const double xn = (xi[j] - mean[i]) * inv_std[i];
                        x->grad[i * n + j] +=
                            inv_std[i] * (gi[j] * gamma->data[j] - mean_dyg - xn * mean_dyg_xn);
                    }
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j)
                        gamma->grad[j] += gi[j] * (xi[j] - mean[i]) * inv_std[i];
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) beta->grad[j] += gi[j];
                }
            }
        };
    }
    return out;
}

TensorPtr dropout(const TensorPtr& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParameterError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    if (!training) return x;

    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x->size());
    auto out = Tensor::create(x->shape, track(x));
    for (std::size_t i = 0; i < x->size(); ++i) {
        (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
        out->data[i] = x->data[i] * (*mask)[i];
    }

    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out, mask]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * (*mask)[i];
        };
    }
    return out;
}

TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
    require_matrix(table, "gather_rows");
    const std::size_t v = table->shape[0], d = table->shape[1];
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw VocabularyError("gather_rows: id " + std::to_string(id) +
                                  " outside table of " + std::to_string(v) + " rows");

    auto out = Tensor::create({ids.size(), d}, track(table));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table->data.data() + static_cast<std::size_t>(ids[i]) * d, d,
                    out->data.data() + i * d);

    if (out->requires_grad) {
        out->parents = {table};
        out->backward_fn = [table, out, ids, d]() {
            table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    table->grad[static_cast<std::size_t>(ids[i]) * d + j] += out->grad[i * d + j];
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = Tensor::create({1}, track(x));
    double s = 0.0;
    for (double v : x->data) s += v;
    out->data[0] = s;
    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
        };
    }
    return out;
}

TensorPtr cross_entropy(const TensorPtr& logits, std::size_t gold) {
    const std::size_t l = logits->size();
    if (l == 0) throw DimensionError("cross_entropy: empty logits");
    if (gold >= l)
        throw LabelError("cross_entropy: gold index " + std::to_string(gold) +
                         " out of range for " + std::to_string(l) + " logits");

    double mx = logits->data[0];
    for (double v : logits->data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits->data) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);

    auto out = Tensor::create({1}, track(logits));
    out->data[0] = lse - logits->data[gold];

    if (out->requires_grad) {
        out->parents = {logits};
        out->backward_fn = [logits, out, gold, mx, sum]() {
            logits->ensure_grad();
            const double g = out->grad[0];
            for (std::size_t i = 0; i < logits->size(); ++i) {
                const double p = std::exp(logits->data[i] - mx) / sum;
                logits->grad[i] += g * (p - (i == gold ? 1.0 : 0.0));
            }
        };
    }
    return out;
}

TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> shape) {
    if (shape_product(shape) != x->size())
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " +
                             shape_str(shape));
    auto out = Tensor::create(std::move(shape), track(x));
    out->data = x->data;
    if (out->requires_grad) {
        out->parents = {x};
        out->backward_fn = [x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i];
        };
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& x, std::size_t begin, std::size_t end) {
    require_matrix(x, "slice_cols");
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (begin > end || end > n)
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") outside width of " + shape_str(x->shape));
    auto out = Tensor::create({m, end - begin});
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x->data.data() + i * n + begin, end - begin,
                    out->data.data() + i * (end - begin));
    return out;
}

void backward(const TensorPtr& loss) {
    if (loss->size() != 1)
        throw DimensionError("backward: loss must be scalar, got " + shape_str(loss->shape));

    // Iterative post-order DFS for reverse topological order.
    std::vector<TensorPtr> order;
    std::unordered_set<Tensor*> visited;
    std::vector<std::pair<TensorPtr, std::size_t>> stack;
    stack.emplace_back(loss, 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorPtr child = node->parents[next_child++];
            if (visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) {
            (*it)->ensure_grad();
            (*it)->backward_fn();
        }
    }
    // Consume the graph.
    for (auto& node : order) {
        node->backward_fn = nullptr;
        node->parents.clear();
    }
}

}  // namespace aba
