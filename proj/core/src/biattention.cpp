#include "aba/biattention.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "aba/encoder.hpp"
#include "aba/error.hpp"
#include "json.hpp"

namespace aba {

TrilinearWeights TrilinearWeights::init(std::size_t feature_width, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(3 * feature_width));
    return TrilinearWeights{Tensor::uniform({3 * feature_width}, -bound, bound, rng, true)};
}

TensorPtr trilinear_similarity(const TensorPtr& p, const TensorPtr& q,
                               const TrilinearWeights& w) {
    const std::size_t l = p->shape[0], D = p->shape[1], m = q->shape[0];
    if (q->shape[1] != D || w.w->size() != 3 * D)
        throw DimensionError("trilinear_similarity: widths disagree, p " + shape_str(p->shape) +
                             ", q " + shape_str(q->shape) + ", w " + shape_str(w.w->shape));

    const double* wp = w.w->data.data();
    const double* wq = wp + D;
    const double* wx = wq + D;

    const bool rg =
        grad_enabled() && (p->requires_grad || q->requires_grad || w.w->requires_grad);
    auto out = Tensor::create({l, m}, rg);

    // Row terms w_p . p_i and column terms w_q . q_j are shared across the
    // matrix; only the product term needs the full l*m*D loop.
    std::vector<double> p_term(l, 0.0), q_term(m, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
        const double* pi = p->data.data() + i * D;
        for (std::size_t c = 0; c < D; ++c) p_term[i] += wp[c] * pi[c];
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double* qj = q->data.data() + j * D;
        for (std::size_t c = 0; c < D; ++c) q_term[j] += wq[c] * qj[c];
    }
    for (std::size_t i = 0; i < l; ++i) {
        const double* pi = p->data.data() + i * D;
        for (std::size_t j = 0; j < m; ++j) {
            const double* qj = q->data.data() + j * D;
            double cross = 0.0;
            for (std::size_t c = 0; c < D; ++c) cross += wx[c] * pi[c] * qj[c];
            out->data[i * m + j] = p_term[i] + q_term[j] + cross;
        }
    }

    if (out->requires_grad) {
        auto weights = w.w;
        out->parents = {p, q, weights};
        out->backward_fn = [p, q, weights, out, l, m, D]() {
            const double* wp = weights->data.data();
            const double* wq = wp + D;
            const double* wx = wq + D;
            const double* G = out->grad.data();

            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < l; ++i) {
                    double* dpi = p->grad.data() + i * D;
                    for (std::size_t j = 0; j < m; ++j) {
                        const double g = G[i * m + j];
                        const double* qj = q->data.data() + j * D;
                        for (std::size_t c = 0; c < D; ++c) dpi[c] += g * (wp[c] + wx[c] * qj[c]);
                    }
                }
            }
            if (q->requires_grad) {
                q->ensure_grad();
                for (std::size_t i = 0; i < l; ++i) {
                    const double* pi = p->data.data() + i * D;
                    for (std::size_t j = 0; j < m; ++j) {
                        const double g = G[i * m + j];
                        double* dqj = q->grad.data() + j * D;
                        for (std::size_t c = 0; c < D; ++c) dqj[c] += g * (wq[c] + wx[c] * pi[c]);
                    }
                }
            }
            if (weights->requires_grad) {
                weights->ensure_grad();
                double* dwp = weights->grad.data();
                double* dwq = dwp + D;
                double* dwx = dwq + D;
                for (std::size_t i = 0; i < l; ++i) {
                    const double* pi = p->data.data() + i * D;
                    for (std::size_t j = 0; j < m; ++j) {
                        const double g = G[i * m + j];
                        const double* qj = q->data.data() + j * D;
                        for (std::size_t c = 0; c < D; ++c) {
                            dwp[c] += g * pi[c];
                            dwq[c] += g * qj[c];
                            dwx[c] += g * pi[c] * qj[c];
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr similarity(const TensorPtr& p, const TensorPtr& q, const TrilinearWeights& w,
                     const std::vector<bool>& p_mask, const std::vector<bool>& q_mask,
                     double dropout_rate, bool training, Rng& rng) {
    const std::size_t l = p->shape[0], m = q->shape[0];
    if (p_mask.size() != l || q_mask.size() != m)
        throw DimensionError("similarity: mask lengths " + std::to_string(p_mask.size()) + "/" +
                             std::to_string(q_mask.size()) + " do not match p " +
                             shape_str(p->shape) + ", q " + shape_str(q->shape));

    auto h = dropout(trilinear_similarity(p, q, w), dropout_rate, training, rng);

    // Additive mask: kMaskValue on any cell whose row or column is padding.
    auto mask = Tensor::create({l, m});
    bool any_masked = false;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (!p_mask[i] || !q_mask[j]) {
                mask->data[i * m + j] = kMaskValue;
                any_masked = true;
            }
    return any_masked ? add(h, mask) : h;
}

TensorPtr p2q_attention(const TensorPtr& h_row, const TensorPtr& q) {
    return matmul(h_row, q);
}

TensorPtr q2p_attention(const TensorPtr& h_row, const TensorPtr& h_col, const TensorPtr& p) {
    return matmul(matmul(h_row, transpose(h_col)), p);
}

FusedRepresentation fuse(const TensorPtr& p, const TensorPtr& m, const TensorPtr& s) {
    if (p->shape != m->shape || p->shape != s->shape)
        throw DimensionError("fuse: shapes disagree, p " + shape_str(p->shape) + ", M " +
                             shape_str(m->shape) + ", S " + shape_str(s->shape));
    return FusedRepresentation{concat_features({p, m, mul(p, m), mul(p, s)})};
}

AttentionBundle bidirectional_attention(const TensorPtr& p, const TensorPtr& q,
                                        const TrilinearWeights& w,
                                        const std::vector<bool>& p_mask,
                                        const std::vector<bool>& q_mask, double dropout_rate,
                                        bool training, Rng& rng) {
    AttentionBundle bundle;
    bundle.h = similarity(p, q, w, p_mask, q_mask, dropout_rate, training, rng);
    bundle.h_row = softmax_rows(bundle.h);
    bundle.h_col = softmax_cols(bundle.h);
    bundle.m = p2q_attention(bundle.h_row, q);
    bundle.s = q2p_attention(bundle.h_row, bundle.h_col, p);
    return bundle;
}

void write_attention_json(std::ostream& out, const AttentionDump& dump) {
    if (dump.weights.size() != dump.rows * dump.cols ||
        dump.passage_tokens.size() != dump.rows || dump.question_tokens.size() != dump.cols)
        throw DimensionError("attention dump: " + std::to_string(dump.weights.size()) +
                             " weights / " + std::to_string(dump.passage_tokens.size()) +
                             " passage tokens do not match " + std::to_string(dump.rows) + "x" +
                             std::to_string(dump.cols));

    // Hand-rolled writer so weights carry exactly 6 decimal places.
    nlohmann::json tokens_p(dump.passage_tokens);
    nlohmann::json tokens_q(dump.question_tokens);
    out << "{\"rows\": " << dump.rows << ", \"cols\": " << dump.cols
        << ", \"passage_tokens\": " << tokens_p.dump()
        << ", \"question_tokens\": " << tokens_q.dump() << ", \"weights\": [";
    char buf[32];
    for (std::size_t i = 0; i < dump.weights.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f", dump.weights[i]);
        if (i) out << ", ";
        out << buf;
    }
    out << "]}\n";
}

AttentionDump read_attention_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("attention json: ") + e.what());
    }
    AttentionDump dump;
    try {
        dump.rows = j.at("rows").get<std::size_t>();
        dump.cols = j.at("cols").get<std::size_t>();
        dump.passage_tokens = j.at("passage_tokens").get<std::vector<std::string>>();
        dump.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
        dump.weights = j.at("weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("attention json: ") + e.what());
    }
    return dump;
}

}  // namespace aba
