#pragma once

#include <vector>

#include "aba/tensor.hpp"

namespace aba {

// Ordered per-layer representations of one sequence: embedding output first,
// then every encoder layer output, then the base attention output.
struct LayerStack {
    std::vector<TensorPtr> layers;  // [E, C^1, ..., C^n, A], each [len x d]

    std::size_t depth() const { return layers.size(); }  // L = n + 2
    std::size_t len() const { return layers.front()->shape[0]; }
    std::size_t width() const { return layers.front()->shape[1]; }
};

LayerStack build_hos(const TensorPtr& embedding, const std::vector<TensorPtr>& encoder_outputs,
                     const TensorPtr& attention_output);

// Which layer's gate row starts at all-ones. FirstLayer puts the ones on the
// embedding entry E (so the fused features initially carry E alone);
// LastLayer puts them on A instead, so the model starts from the base
// attention output. FirstLayer is the default.
enum class GateInit { FirstLayer, LastLayer };

// Trainable per-layer, per-feature multiplicative gate, broadcast over
// sequence positions.
struct GateMatrix {
    TensorPtr values;  // [L x d]

    std::size_t depth() const { return values->shape[0]; }
    std::size_t width() const { return values->shape[1]; }
};

// One gate row of ones (selected by the variant), all other rows zero.
GateMatrix init_gate(std::size_t layer_count, std::size_t width,
                     GateInit variant = GateInit::FirstLayer);

// Feature-axis concatenation of the gated layers: column block k (width d)
// equals layers[k] * gate row k.
struct GatedRepresentation {
    TensorPtr features;  // [len x (L*d)]
};

GatedRepresentation apply_gate(const LayerStack& stack, const GateMatrix& gate);

}  // namespace aba
