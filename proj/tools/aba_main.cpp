#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aba/error.hpp"
#include "aba/metrics.hpp"
#include "aba/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNumericalError = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw aba::IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void require_readable(const std::string& path) {
    if (!fs::exists(path)) throw aba::IoError("input file does not exist: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw aba::IoError("cannot open " + path);
}

struct TrainArgs {
    std::string config_path, data_path, dev_path, out_dir = ".";
    std::string gate_init;
    bool baseline = false;
    long long seed = -1, epochs = -1, batch_size = -1;
    double lr = -1.0;
};

// Config file first, then flag overrides.
void apply_overrides(aba::ModelConfig& config, aba::TrainConfig& train_config,
                     const TrainArgs& args) {
    if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.gate_init.empty()) {
        if (args.gate_init == "first")
            config.gate_init = aba::GateInit::FirstLayer;
        else if (args.gate_init == "last")
            config.gate_init = aba::GateInit::LastLayer;
        else
            throw aba::ConfigError("--gate-init must be 'first' or 'last'");
    }
    if (args.baseline) config.baseline = true;
    if (args.epochs >= 0) train_config.epochs = static_cast<std::size_t>(args.epochs);
    if (args.batch_size > 0) train_config.batch_size = static_cast<std::size_t>(args.batch_size);
    if (args.lr >= 0.0) train_config.lr = args.lr;
}

int cmd_train(const TrainArgs& args) {
    require_readable(args.data_path);
    if (!args.dev_path.empty()) require_readable(args.dev_path);

    aba::ModelConfig config;
    aba::TrainConfig train_config;
    if (!args.config_path.empty()) {
        require_readable(args.config_path);
        const std::string text = read_file(args.config_path);
        config = aba::config_from_json(text);
        json j = json::parse(text);
        train_config.epochs = j.value("epochs", train_config.epochs);
        train_config.lr = j.value("lr", train_config.lr);
        train_config.batch_size = j.value("batch_size", train_config.batch_size);
        train_config.clip_norm = j.value("clip_norm", train_config.clip_norm);
    }
    apply_overrides(config, train_config, args);
    fs::create_directories(args.out_dir);

    std::vector<std::string> warnings;
    auto corpus = aba::load_corpus(args.data_path, {config.max_passage_len, config.max_question_len},
                                   &warnings);
    if (corpus.empty()) throw aba::InputError("no examples in " + args.data_path);

    std::vector<aba::MrcExample> dev;
    if (!args.dev_path.empty()) {
        dev = aba::load_corpus(args.dev_path, {config.max_passage_len, config.max_question_len},
                               &warnings);
    } else {
        // Hold out the last tenth for the per-epoch dev metrics.
        const std::size_t dev_count = corpus.size() / 10;
        dev.assign(corpus.end() - dev_count, corpus.end());
        corpus.resize(corpus.size() - dev_count);
    }
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::vector<const std::vector<std::string>*> sequences;
    for (const auto& ex : corpus) {
        sequences.push_back(&ex.passage_tokens);
        sequences.push_back(&ex.question_tokens);
    }
    auto model = aba::Model::init(config, aba::Vocabulary::build(sequences));

    std::vector<std::string> train_warnings;
    const auto history = aba::train(model, corpus, dev, train_config, &train_warnings);
    for (const auto& w : train_warnings) std::cerr << "warning: " << w << "\n";

    aba::save_checkpoint(model, (fs::path(args.out_dir) / "model.ckpt").string());
    aba::atomic_write_file((fs::path(args.out_dir) / "metrics.csv").string(),
                           aba::metrics_csv(history));
    if (!history.empty())
        std::cout << "trained " << history.size() << " epochs, final loss "
                  << history.back().loss << ", dev EM " << history.back().dev_em << ", dev F1 "
                  << history.back().dev_f1 << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& predictions_path, const std::string& references_path) {
    require_readable(predictions_path);
    require_readable(references_path);

    // The predictions file is one flat {id: answer} object; nlohmann would
    // silently keep the last duplicate key, so track keys while parsing.
    std::set<std::string> seen_ids;
    std::string duplicate_id;
    json::parser_callback_t watch_keys = [&](int, json::parse_event_t event, json& value) {
        if (event == json::parse_event_t::key) {
            const auto key = value.get<std::string>();
            if (!seen_ids.insert(key).second && duplicate_id.empty()) duplicate_id = key;
        }
        return true;
    };

    json pred_json;
    try {
        pred_json = json::parse(read_file(predictions_path), watch_keys);
    } catch (const json::exception& e) {
        throw aba::ParseError(predictions_path + ": " + e.what());
    }
    if (!duplicate_id.empty())
        throw aba::InputError(predictions_path + ": duplicate question id '" + duplicate_id +
                              "'");
    if (!pred_json.is_object())
        throw aba::SchemaError(predictions_path + ": expected an {id: answer} object");
    std::vector<std::pair<std::string, std::string>> predictions;
    for (const auto& [id, text] : pred_json.items()) {
        if (!text.is_string())
            throw aba::SchemaError(predictions_path + ": answer for '" + id +
                                   "' is not a string");
        predictions.emplace_back(id, text.get<std::string>());
    }

    const auto result = aba::evaluate(predictions, aba::load_references(references_path));
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

    json out;
    out["exact_match"] = result.em;
    out["f1"] = result.f1;
    std::cout << out.dump() << "\n";
    return kExitOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& data_path,
                const std::string& out_path) {
    require_readable(checkpoint_path);
    require_readable(data_path);

    const auto model = aba::load_checkpoint(checkpoint_path);
    const auto corpus = aba::load_corpus(
        data_path, {model.config.max_passage_len, model.config.max_question_len});

    json out = json::object();
    for (const auto& [id, text] : aba::predict(model, corpus)) out[id] = text;
    aba::atomic_write_file(out_path, out.dump() + "\n");
    return kExitOk;
}

int cmd_dump_attention(const std::string& checkpoint_path, const std::string& data_path,
                       const std::string& question_id, const std::string& out_path) {
    require_readable(checkpoint_path);
    require_readable(data_path);

    const auto model = aba::load_checkpoint(checkpoint_path);
    const auto corpus = aba::load_corpus(
        data_path, {model.config.max_passage_len, model.config.max_question_len});
    for (const auto& ex : corpus) {
        if (ex.id == question_id) {
            aba::dump_attention(model, ex, out_path);
            return kExitOk;
        }
    }
    throw aba::InputError("question id '" + question_id + "' not found in " + data_path);
}

struct GenerateArgs {
    std::string out_path;
    std::size_t count = 1000;
    aba::SynthTaskSpec spec;
};

int cmd_generate(const GenerateArgs& args) {
    const auto corpus = aba::generate_synthetic(args.spec, args.count);
    std::string lines;
    for (const auto& ex : corpus) lines += aba::to_jsonl_line(ex) + "\n";
    aba::atomic_write_file(args.out_path, lines);
    std::cout << "wrote " << corpus.size() << " examples to " << args.out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive bidirectional attention reading-comprehension toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
    train->add_option("--config", train_args.config_path, "JSON config file");
    train->add_option("--data", train_args.data_path, "training corpus (SQuAD JSON or JSONL)")
        ->required();
    train->add_option("--dev", train_args.dev_path, "dev corpus; default: last 10% of --data");
    train->add_option("--out", train_args.out_dir, "output directory");
    train->add_option("--seed", train_args.seed, "random seed override");
    train->add_option("--epochs", train_args.epochs, "epoch count override");
    train->add_option("--lr", train_args.lr, "learning rate override");
    train->add_option("--batch-size", train_args.batch_size, "batch size override");
    train->add_option("--gate-init", train_args.gate_init,
                      "gate initialization variant: first|last");
    train->add_flag("--baseline", train_args.baseline,
                    "train the final-layer-only ablation baseline");

    std::string predictions_path, references_path;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against references");
    evaluate->add_option("--predictions", predictions_path, "predictions JSON {id: answer}")
        ->required();
    evaluate->add_option("--data", references_path, "references (SQuAD JSON or JSONL)")
        ->required();

    std::string checkpoint_path, data_path, out_path, question_id;
    auto* predict = app.add_subcommand("predict", "Write predictions for a corpus");
    predict->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    predict->add_option("--data", data_path, "corpus to answer")->required();
    predict->add_option("--out", out_path, "output predictions JSON")->required();

    std::string da_checkpoint, da_data, da_id, da_out;
    auto* dump = app.add_subcommand("dump-attention",
                                    "Write the attention matrix JSON for one question");
    dump->add_option("--checkpoint", da_checkpoint, "model checkpoint")->required();
    dump->add_option("--data", da_data, "corpus containing the question")->required();
    dump->add_option("--id", da_id, "question id")->required();
    dump->add_option("--out", da_out, "output JSON path")->required();

    GenerateArgs gen_args;
    long long gen_seed = 0;
    auto* generate = app.add_subcommand("generate-synthetic",
                                        "Generate a synthetic span-extraction corpus");
    generate->add_option("--out", gen_args.out_path, "output JSONL path")->required();
    generate->add_option("--count", gen_args.count, "number of examples");
    generate->add_option("--seed", gen_seed, "generator seed");
    generate->add_option("--vocab", gen_args.spec.vocab_size, "filler vocabulary size");
    generate->add_option("--min-len", gen_args.spec.min_passage_len, "min passage length");
    generate->add_option("--max-len", gen_args.spec.max_passage_len, "max passage length");
    generate->add_option("--answer-len-min", gen_args.spec.min_answer_len, "min answer length");
    generate->add_option("--answer-len-max", gen_args.spec.max_answer_len, "max answer length");
    generate->add_option("--unanswerable", gen_args.spec.unanswerable_fraction,
                         "fraction of unanswerable examples");
    generate->add_option("--cues", gen_args.spec.cue_count, "number of distinct cue tokens");
    generate->add_option("--distractors", gen_args.spec.distractor_cues,
                         "distractor cue occurrences per passage");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (evaluate->parsed()) return cmd_evaluate(predictions_path, references_path);
        if (predict->parsed()) return cmd_predict(checkpoint_path, data_path, out_path);
        if (dump->parsed()) return cmd_dump_attention(da_checkpoint, da_data, da_id, da_out);
        if (generate->parsed()) {
            gen_args.spec.seed = static_cast<std::uint64_t>(gen_seed);
            return cmd_generate(gen_args);
        }
    } catch (const aba::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitInputError;
}
