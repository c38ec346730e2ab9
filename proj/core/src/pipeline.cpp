#include "aba/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aba/error.hpp"
#include "aba/metrics.hpp"
#include "json.hpp"

namespace aba {

using nlohmann::json;

void ModelConfig::validate() const {
    if (d == 0 || d_ff == 0) throw ConfigError("model dims must be positive");
    if (max_passage_len == 0 || max_question_len == 0 || max_answer_len == 0)
        throw ConfigError("sequence length limits must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout rate outside [0, 1)");
}

std::string config_to_json(const ModelConfig& config) {
    json j;
    j["d"] = config.d;
    j["d_ff"] = config.d_ff;
    j["n"] = config.n;
    j["dropout"] = config.dropout_rate;
    j["max_passage_len"] = config.max_passage_len;
    j["max_question_len"] = config.max_question_len;
    j["max_answer_len"] = config.max_answer_len;
    j["gate_init"] = config.gate_init == GateInit::FirstLayer ? "first" : "last";
    j["baseline"] = config.baseline;
    j["seed"] = config.seed;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    ModelConfig config;
    try {
        config.d = j.value("d", config.d);
        config.d_ff = j.value("d_ff", config.d_ff);
        config.n = j.value("n", config.n);
        config.dropout_rate = j.value("dropout", config.dropout_rate);
        config.max_passage_len = j.value("max_passage_len", config.max_passage_len);
        config.max_question_len = j.value("max_question_len", config.max_question_len);
        config.max_answer_len = j.value("max_answer_len", config.max_answer_len);
        const std::string gate = j.value("gate_init", "first");
        if (gate == "first")
            config.gate_init = GateInit::FirstLayer;
        else if (gate == "last")
            config.gate_init = GateInit::LastLayer;
        else
            throw ConfigError("gate_init must be 'first' or 'last', got '" + gate + "'");
        config.baseline = j.value("baseline", config.baseline);
        config.seed = j.value("seed", config.seed);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
    config.validate();
    return config;
}

Model Model::init(const ModelConfig& config, Vocabulary vocab) {
    config.validate();
    Model model;
    model.config = config;
    model.vocab = std::move(vocab);

    Rng rng(config.seed);
    model.embedding = EmbeddingTable::init(model.vocab.size(), config.d, rng);
    model.blocks.reserve(config.n);
    for (std::size_t i = 0; i < config.n; ++i)
        model.blocks.push_back(EncoderBlock::init(config.d, config.d_ff, rng));
    if (!config.baseline) {
        model.lambda_p = init_gate(config.n + 2, config.d, config.gate_init);
        model.lambda_q = init_gate(config.n + 2, config.d, config.gate_init);
    }
    model.trilinear = TrilinearWeights::init(config.feature_width(), rng);
    model.span_head = SpanHead::init(4 * config.feature_width(), rng);
    return model;
}

std::vector<std::pair<std::string, TensorPtr>> Model::named_parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> params;
    params.emplace_back("embedding", embedding.weights);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string prefix = "enc" + std::to_string(i) + ".";
        const auto& b = blocks[i];
        params.emplace_back(prefix + "wq", b.wq);
        params.emplace_back(prefix + "wk", b.wk);
        params.emplace_back(prefix + "wv", b.wv);
        params.emplace_back(prefix + "ff1_w", b.ff1_w);
        params.emplace_back(prefix + "ff1_b", b.ff1_b);
        params.emplace_back(prefix + "ff2_w", b.ff2_w);
        params.emplace_back(prefix + "ff2_b", b.ff2_b);
        params.emplace_back(prefix + "ln1_g", b.ln1_g);
        params.emplace_back(prefix + "ln1_b", b.ln1_b);
        params.emplace_back(prefix + "ln2_g", b.ln2_g);
        params.emplace_back(prefix + "ln2_b", b.ln2_b);
    }
    if (!config.baseline) {
        params.emplace_back("lambda_p", lambda_p.values);
        params.emplace_back("lambda_q", lambda_q.values);
    }
    params.emplace_back("trilinear_w", trilinear.w);
    params.emplace_back("span_begin_w", span_head.begin_w);
    params.emplace_back("span_end_w", span_head.end_w);
    return params;
}

Batch make_batch(const std::vector<MrcExample>& examples, std::size_t begin, std::size_t end,
                 const Vocabulary& vocab, const ModelConfig& config) {
    if (begin >= end || end > examples.size())
        throw InputError("make_batch: empty or out-of-range example window");

    Batch batch;
    std::size_t max_l = 0, max_m = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = examples[i];
        max_l = std::max(max_l, std::min(ex.passage_tokens.size(), config.max_passage_len));
        max_m = std::max(max_m, std::min(ex.question_tokens.size(), config.max_question_len));
    }
    max_m = std::max<std::size_t>(max_m, 1);

    for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = examples[i];
        const std::size_t l = std::min(ex.passage_tokens.size(), config.max_passage_len);
        const std::size_t m = std::min(ex.question_tokens.size(), config.max_question_len);
        if (l == 0) throw InputError("make_batch: example '" + ex.id + "' has empty passage");

        std::vector<int> p_ids(max_l, Vocabulary::kPad), q_ids(max_m, Vocabulary::kPad);
        std::vector<bool> p_mask(max_l, false), q_mask(max_m, false);
        for (std::size_t t = 0; t < l; ++t) {
            p_ids[t] = vocab.id_of(ex.passage_tokens[t]);
            p_mask[t] = true;
        }
        for (std::size_t t = 0; t < m; ++t) {
            q_ids[t] = vocab.id_of(ex.question_tokens[t]);
            q_mask[t] = true;
        }

        std::pair<std::size_t, std::size_t> gold{l - 1, l - 1};
        if (!ex.is_impossible) {
            if (ex.gold_spans.empty())
                throw InputError("make_batch: answerable example '" + ex.id + "' has no gold span");
            gold = ex.gold_spans.front();
            if (gold.second >= l)
                throw InputError("make_batch: gold span of '" + ex.id +
                                 "' falls outside the truncated passage");
        }

        batch.ids.push_back(ex.id);
        batch.passage_ids.push_back(std::move(p_ids));
        batch.question_ids.push_back(std::move(q_ids));
        batch.passage_mask.push_back(std::move(p_mask));
        batch.question_mask.push_back(std::move(q_mask));
        batch.passage_len.push_back(l);
        batch.question_len.push_back(m);
        batch.gold.push_back(gold);
    }
    return batch;
}

namespace {

ExampleOutput forward_one(const Model& model, const Batch& batch, std::size_t i, bool training,
                          Rng& rng) {
    const auto& p_mask = batch.passage_mask[i];
    const auto& q_mask = batch.question_mask[i];

    auto e_p = add_position_signal(embed(batch.passage_ids[i], model.embedding));
    auto e_q = add_position_signal(embed(batch.question_ids[i], model.embedding));

    auto stack_p = encode_stack(e_p, model.blocks, p_mask);
    auto stack_q = encode_stack(e_q, model.blocks, q_mask);
    auto c_p = stack_p.empty() ? e_p : stack_p.back();
    auto c_q = stack_q.empty() ? e_q : stack_q.back();

    auto base = cross_attend(c_p, c_q, p_mask, q_mask);

    TensorPtr features_p, features_q;
    if (model.config.baseline) {
        features_p = base.a_p;
        features_q = base.a_q;
    } else {
        features_p = apply_gate(build_hos(e_p, stack_p, base.a_p), model.lambda_p).features;
        features_q = apply_gate(build_hos(e_q, stack_q, base.a_q), model.lambda_q).features;
    }

    ExampleOutput out;
    out.attention = bidirectional_attention(features_p, features_q, model.trilinear, p_mask,
                                            q_mask, model.config.dropout_rate, training, rng);
    auto fused = fuse(features_p, out.attention.m, out.attention.s);
    std::tie(out.begin_logits, out.end_logits) = span_logits(fused, model.span_head, p_mask);
    out.passage_len = batch.passage_len[i];
    out.question_len = batch.question_len[i];
    return out;
}

std::vector<ExampleOutput> forward_batch(const Model& model, const Batch& batch, bool training,
                                         Rng& rng) {
    std::vector<ExampleOutput> outputs;
    outputs.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        try {
            outputs.push_back(forward_one(model, batch, i, training, rng));
        } catch (const std::runtime_error& e) {
            throw InputError("example '" + batch.ids[i] + "': " + e.what());
        }
    }
    return outputs;
}

}  // namespace

std::vector<ExampleOutput> forward(const Model& model, const Batch& batch, bool training,
                                   Rng& rng) {
    if (model.config.baseline)
        throw ConfigError("forward: model was built as the final-layer baseline");
    return forward_batch(model, batch, training, rng);
}

std::vector<ExampleOutput> forward_baseline(const Model& model, const Batch& batch,
                                            bool training, Rng& rng) {
    if (!model.config.baseline)
        throw ConfigError("forward_baseline: model carries a layer stack and gate");
    return forward_batch(model, batch, training, rng);
}

std::vector<ExampleOutput> run_model(const Model& model, const Batch& batch, bool training,
                                     Rng& rng) {
    return forward_batch(model, batch, training, rng);
}

AdamOptimizer::AdamOptimizer(std::vector<TensorPtr> params, double lr, double clip_norm,
                             double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      clip_norm_(clip_norm),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    double norm_sq = 0.0;
    for (const auto& p : params_)
        for (double g : p->grad) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    const double clip_scale = clip_norm_ > 0.0 && norm > clip_norm_ ? clip_norm_ / norm : 1.0;

    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        if (p.grad.empty()) continue;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i] * clip_scale;
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
            const double m_hat = m_[k][i] / bc1;
            const double v_hat = v_[k][i] / bc2;
            p.data[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

namespace {

// Examples whose gold span cannot survive truncation are unusable as
// training targets.
bool fits_config(const MrcExample& ex, const ModelConfig& config) {
    if (ex.passage_tokens.empty()) return false;
    if (ex.is_impossible) return true;
    if (ex.gold_spans.empty()) return false;
    const std::size_t l = std::min(ex.passage_tokens.size(), config.max_passage_len);
    const auto& [b, e] = ex.gold_spans.front();
    if (e >= l) return false;
    return !(b == l - 1 && e == l - 1);
}

std::vector<std::pair<std::string, std::vector<std::string>>> reference_answers(
    const std::vector<MrcExample>& examples) {
    std::vector<std::pair<std::string, std::vector<std::string>>> refs;
    refs.reserve(examples.size());
    for (const auto& ex : examples) refs.emplace_back(ex.id, ex.gold_texts());
    return refs;
}

}  // namespace

std::vector<EpochStats> train(Model& model, const std::vector<MrcExample>& train_set,
                              const std::vector<MrcExample>& dev_set,
                              const TrainConfig& train_config,
                              std::vector<std::string>* warnings) {
    if (train_set.empty()) throw InputError("train: empty corpus");
    if (train_config.batch_size == 0) throw ConfigError("train: batch size must be positive");

    std::vector<MrcExample> usable;
    usable.reserve(train_set.size());
    for (const auto& ex : train_set) {
        if (fits_config(ex, model.config)) {
            usable.push_back(ex);
        } else if (warnings) {
            warnings->push_back("train: example '" + ex.id +
                                "' dropped (gold span does not fit the configured lengths)");
        }
    }
    if (usable.empty()) throw InputError("train: no usable examples after length filtering");

    // Training-time stochasticity (shuffles, dropout) runs on its own stream
    // so it cannot collide with the parameter-init draws.
    Rng rng(model.config.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<TensorPtr> params;
    for (auto& [name, tensor] : model.named_parameters()) params.push_back(tensor);
    AdamOptimizer optimizer(params, train_config.lr, train_config.clip_norm);

    const auto dev_refs = reference_answers(dev_set);
    std::vector<std::size_t> indices(usable.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::vector<MrcExample> shuffled(usable.size());

    std::vector<EpochStats> history;
    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.uniform_int(i)]);
        for (std::size_t i = 0; i < indices.size(); ++i) shuffled[i] = usable[indices[i]];

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < shuffled.size(); start += train_config.batch_size) {
            const std::size_t stop =
                std::min(shuffled.size(), start + train_config.batch_size);
            const Batch batch = make_batch(shuffled, start, stop, model.vocab, model.config);
            optimizer.zero_grad();
            auto outputs = run_model(model, batch, /*training=*/true, rng);

            TensorPtr loss;
            for (std::size_t i = 0; i < outputs.size(); ++i) {
                auto example_loss = span_loss(outputs[i].begin_logits, outputs[i].end_logits,
                                              batch.gold[i].first, batch.gold[i].second);
                loss = loss ? add(loss, example_loss) : example_loss;
            }
            loss = scale(loss, 1.0 / static_cast<double>(outputs.size()));
            if (!std::isfinite(loss->data[0]))
                throw DivergenceError("train: non-finite loss at step " +
                                      std::to_string(model.step));

            backward(loss);
            optimizer.step();
            ++model.step;
            loss_sum += loss->data[0];
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(batches);
        if (!dev_set.empty()) {
            const auto result = evaluate(predict(model, dev_set, train_config.batch_size),
                                         dev_refs);
            stats.dev_em = result.em;
            stats.dev_f1 = result.f1;
        }
        history.push_back(stats);
    }
    return history;
}

std::vector<std::pair<std::string, std::string>> predict(
    const Model& model, const std::vector<MrcExample>& examples, std::size_t batch_size) {
    NoGradGuard no_grad;
    Rng rng(0);  // unused: eval mode draws nothing
    std::vector<std::pair<std::string, std::string>> predictions;
    predictions.reserve(examples.size());

    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const std::size_t stop = std::min(examples.size(), start + batch_size);
        const Batch batch = make_batch(examples, start, stop, model.vocab, model.config);
        auto outputs = run_model(model, batch, /*training=*/false, rng);
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            const std::size_t l = outputs[i].passage_len;
            std::vector<double> begin(outputs[i].begin_logits->data.begin(),
                                      outputs[i].begin_logits->data.begin() + l);
            std::vector<double> end(outputs[i].end_logits->data.begin(),
                                    outputs[i].end_logits->data.begin() + l);
            const auto span = decode_span(begin, end, model.config.max_answer_len);
            predictions.emplace_back(
                batch.ids[i],
                span.is_unanswerable ? "" : examples[start + i].span_text(span.begin, span.end));
        }
    }
    return predictions;
}

std::string metrics_csv(const std::vector<EpochStats>& history) {
    std::string csv = "epoch,loss,dev_em,dev_f1\n";
    char row[160];
    for (const auto& s : history) {
        std::snprintf(row, sizeof(row), "%zu,%.17g,%.17g,%.17g\n", s.epoch, s.loss, s.dev_em,
                      s.dev_f1);
        csv += row;
    }
    return csv;
}

void dump_attention(const Model& model, const MrcExample& example, const std::string& path) {
    NoGradGuard no_grad;
    Rng rng(0);
    const std::vector<MrcExample> single{example};
    const Batch batch = make_batch(single, 0, 1, model.vocab, model.config);
    auto outputs = run_model(model, batch, /*training=*/false, rng);

    const auto& h_row = outputs[0].attention.h_row;
    AttentionDump dump;
    dump.rows = outputs[0].passage_len;
    dump.cols = outputs[0].question_len;
    dump.passage_tokens.assign(example.passage_tokens.begin(),
                               example.passage_tokens.begin() + dump.rows);
    dump.question_tokens.assign(example.question_tokens.begin(),
                                example.question_tokens.begin() + dump.cols);
    const std::size_t padded_cols = h_row->shape[1];
    dump.weights.reserve(dump.rows * dump.cols);
    for (std::size_t i = 0; i < dump.rows; ++i)
        for (std::size_t j = 0; j < dump.cols; ++j)
            dump.weights.push_back(h_row->data[i * padded_cols + j]);

    std::ostringstream out;
    write_attention_json(out, dump);
    atomic_write_file(path, out.str());
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

}  // namespace aba
