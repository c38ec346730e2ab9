#include "aba/hos.hpp"

#include "aba/error.hpp"

namespace aba {

LayerStack build_hos(const TensorPtr& embedding, const std::vector<TensorPtr>& encoder_outputs,
                     const TensorPtr& attention_output) {
    LayerStack stack;
    stack.layers.reserve(encoder_outputs.size() + 2);
    stack.layers.push_back(embedding);
    for (const auto& c : encoder_outputs) stack.layers.push_back(c);
    stack.layers.push_back(attention_output);

    const auto& shape = stack.layers.front()->shape;
    for (const auto& layer : stack.layers) {
        if (layer->shape.size() != 2 || layer->shape != shape)
            throw DimensionError("build_hos: layer shapes disagree, " + shape_str(shape) +
                                 " vs " + shape_str(layer->shape));
    }
    return stack;
}

GateMatrix init_gate(std::size_t layer_count, std::size_t width, GateInit variant) {
    auto values = Tensor::zeros({layer_count, width}, true);
    const std::size_t ones_row = variant == GateInit::FirstLayer ? 0 : layer_count - 1;
    for (std::size_t j = 0; j < width; ++j) values->data[ones_row * width + j] = 1.0;
    return GateMatrix{values};
}

GatedRepresentation apply_gate(const LayerStack& stack, const GateMatrix& gate) {
    const std::size_t L = stack.depth();
    const std::size_t len = stack.len();
    const std::size_t d = stack.width();
    if (gate.depth() != L || gate.width() != d)
        throw DimensionError("apply_gate: gate " + shape_str(gate.values->shape) +
                             " does not match stack of " + std::to_string(L) + " layers " +
                             shape_str(stack.layers.front()->shape));

    bool rg = gate.values->requires_grad;
    for (const auto& layer : stack.layers) rg = rg || layer->requires_grad;

    auto out = Tensor::create({len, L * d}, grad_enabled() && rg);
    for (std::size_t k = 0; k < L; ++k) {
        const double* layer = stack.layers[k]->data.data();
        const double* g = gate.values->data.data() + k * d;
        for (std::size_t i = 0; i < len; ++i) {
            double* dst = out->data.data() + i * L * d + k * d;
            const double* src = layer + i * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] = src[c] * g[c];
        }
    }

    if (out->requires_grad) {
        out->parents = stack.layers;
        out->parents.push_back(gate.values);
        auto layers = stack.layers;
        auto gate_values = gate.values;
        out->backward_fn = [layers, gate_values, out, L, len, d]() {
            for (std::size_t k = 0; k < L; ++k) {
                const double* g = gate_values->data.data() + k * d;
                const double* layer = layers[k]->data.data();
                if (layers[k]->requires_grad) {
                    layers[k]->ensure_grad();
                    double* dl = layers[k]->grad.data();
                    for (std::size_t i = 0; i < len; ++i) {
                        const double* go = out->grad.data() + i * L * d + k * d;
                        for (std::size_t c = 0; c < d; ++c) dl[i * d + c] += go[c] * g[c];
                    }
                }
                if (gate_values->requires_grad) {
                    gate_values->ensure_grad();
                    double* dg = gate_values->grad.data() + k * d;
                    for (std::size_t i = 0; i < len; ++i) {
                        const double* go = out->grad.data() + i * L * d + k * d;
                        for (std::size_t c = 0; c < d; ++c) dg[c] += go[c] * layer[i * d + c];
                    }
                }
            }
        };
    }
    return GatedRepresentation{out};
}

}  // namespace aba
