#include <cstring>
#include <fstream>

#include "aba/error.hpp"
#include "aba/pipeline.hpp"
#include "json.hpp"

namespace aba {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'B', 'A', 'M', 'R', 'C', '1', '\n'};

void append_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    const auto params = model.named_parameters();

    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : params) {
        json entry;
        entry["name"] = name;
        entry["shape"] = tensor->shape;
        entry["offset"] = offset;
        manifest.push_back(entry);
        offset += tensor->size() * sizeof(double);
    }

    json header;
    header["config"] = json::parse(config_to_json(model.config));
    header["step"] = model.step;
    header["vocab"] = model.vocab.tokens();
    header["params"] = manifest;
    const std::string header_text = header.dump();

    std::string bytes(kMagic, sizeof(kMagic));
    append_u64_le(bytes, header_text.size());
    bytes += header_text;
    for (const auto& [name, tensor] : params) {
        const std::size_t n = tensor->size() * sizeof(double);
        const std::size_t at = bytes.size();
        bytes.resize(at + n);
        std::memcpy(bytes.data() + at, tensor->data.data(), n);
    }
    atomic_write_file(path, bytes);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 8 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw SchemaError(path + ": not a checkpoint file");
    const std::uint64_t header_len = read_u64_le(bytes.data() + sizeof(kMagic));
    const std::size_t header_start = sizeof(kMagic) + 8;
    if (header_start + header_len > bytes.size())
        throw SchemaError(path + ": truncated checkpoint header");

    json header;
    try {
        header = json::parse(bytes.substr(header_start, header_len));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }

    Model model;
    try {
        model.config = config_from_json(header.at("config").dump());
        model.step = header.at("step").get<std::size_t>();
        model.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());

        const std::size_t blocks_start = header_start + header_len;
        std::vector<std::pair<std::string, TensorPtr>> loaded;
        for (const auto& entry : header.at("params")) {
            const std::string name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
            auto tensor = Tensor::create(shape, true);
            const std::size_t n = tensor->size() * sizeof(double);
            if (blocks_start + offset + n > bytes.size())
                throw SchemaError(path + ": parameter '" + name + "' overruns the file");
            std::memcpy(tensor->data.data(), bytes.data() + blocks_start + offset, n);
            loaded.emplace_back(name, std::move(tensor));
        }

        auto take = [&](const std::string& name) -> TensorPtr {
            for (auto& [n, t] : loaded)
                if (n == name) return t;
            throw SchemaError(path + ": missing parameter '" + name + "'");
        };

        model.embedding.weights = take("embedding");
        model.blocks.resize(model.config.n);
        for (std::size_t i = 0; i < model.config.n; ++i) {
            const std::string prefix = "enc" + std::to_string(i) + ".";
            auto& b = model.blocks[i];
            b.wq = take(prefix + "wq");
            b.wk = take(prefix + "wk");
            b.wv = take(prefix + "wv");
            b.ff1_w = take(prefix + "ff1_w");
            b.ff1_b = take(prefix + "ff1_b");
            b.ff2_w = take(prefix + "ff2_w");
            b.ff2_b = take(prefix + "ff2_b");
            b.ln1_g = take(prefix + "ln1_g");
            b.ln1_b = take(prefix + "ln1_b");
            b.ln2_g = take(prefix + "ln2_g");
            b.ln2_b = take(prefix + "ln2_b");
        }
        if (!model.config.baseline) {
            model.lambda_p.values = take("lambda_p");
            model.lambda_q.values = take("lambda_q");
        }
        model.trilinear.w = take("trilinear_w");
        model.span_head.begin_w = take("span_begin_w");
        model.span_head.end_w = take("span_end_w");
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }

    if (model.embedding.weights->shape !=
        std::vector<std::size_t>{model.vocab.size(), model.config.d})
        throw SchemaError(path + ": embedding shape does not match vocabulary and config");
    return model;
}

}  // namespace aba
