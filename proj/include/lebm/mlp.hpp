#pragma once

#include <string>
#include <vector>

#include "lebm/rng.hpp"
#include "lebm/tape.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

enum class Activation { LeakyRelu, Tanh, Identity };

struct MlpLayer {
    Tensor weight;  // (in x out)
    Tensor bias;    // (out)
    Activation act = Activation::Identity;
    double slope = 0.2;  // leaky-relu negative slope, in (0, 1)

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
};

struct Mlp {
    std::vector<MlpLayer> layers;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
};

inline void validate_mlp(const Mlp& net) {
    if (net.layers.empty()) throw std::invalid_argument("mlp: no layers");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const MlpLayer& layer = net.layers[l];
        if (layer.bias.size() != layer.out_dim()) {
            throw std::invalid_argument("mlp: layer " + std::to_string(l) +
                                        " bias length does not match output dim");
        }
        if (layer.act == Activation::LeakyRelu && !(layer.slope > 0.0 && layer.slope < 1.0)) {
            throw std::invalid_argument("mlp: layer " + std::to_string(l) +
                                        " leaky-relu slope must be in (0,1)");
        }
        if (l > 0 && net.layers[l - 1].out_dim() != layer.in_dim()) {
            throw std::invalid_argument("mlp: layer " + std::to_string(l) +
                                        " input dim does not chain with layer " +
                                        std::to_string(l - 1));
        }
    }
}

// Xavier-normal weights (std = sqrt(2 / (fan_in + fan_out))), zero biases.
inline Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden_act,
                    double slope, Activation output_act, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least one layer");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const bool last = (l + 2 == dims.size());
        MlpLayer layer;
        layer.weight = rng.standard_normal({dims[l], dims[l + 1]});
        const double stddev = std::sqrt(2.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] *= stddev;
        layer.bias = Tensor::zeros({dims[l + 1]});
        layer.act = last ? output_act : hidden_act;
        layer.slope = slope;
        net.layers.push_back(std::move(layer));
    }
    validate_mlp(net);
    return net;
}

inline Mlp make_zero_mlp(const std::vector<std::size_t>& dims, Activation hidden_act,
                         double slope, Activation output_act) {
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const bool last = (l + 2 == dims.size());
        net.layers.push_back({Tensor::zeros({dims[l], dims[l + 1]}),
                              Tensor::zeros({dims[l + 1]}),
                              last ? output_act : hidden_act, slope});
    }
    validate_mlp(net);
    return net;
}

// Parameter leaves of one network bound onto a tape, in layer order.
struct MlpNodes {
    std::vector<NodeId> weights;
    std::vector<NodeId> biases;

    std::vector<NodeId> all() const {
        std::vector<NodeId> ids;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            ids.push_back(weights[l]);
            ids.push_back(biases[l]);
        }
        return ids;
    }
};

inline MlpNodes bind_mlp(const Mlp& net, Tape& tape) {
    MlpNodes nodes;
    for (const MlpLayer& layer : net.layers) {
        nodes.weights.push_back(tape.leaf(layer.weight));
        nodes.biases.push_back(tape.leaf(layer.bias));
    }
    return nodes;
}

// Forward pass through bound parameters; records everything on the tape so
// gradients w.r.t. input and parameters are available from the same graph.
inline NodeId mlp_apply(const Mlp& net, const MlpNodes& nodes, Tape& tape, NodeId input) {
    NodeId h = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const MlpLayer& layer = net.layers[l];
        if (tape.value(h).cols() != layer.in_dim()) {
            throw std::invalid_argument(
                "mlp_forward: layer " + std::to_string(l) + " expects input dim " +
                std::to_string(layer.in_dim()) + ", got " +
                std::to_string(tape.value(h).cols()));
        }
        h = tape.add_row(tape.matmul(h, nodes.weights[l]), nodes.biases[l]);
        switch (layer.act) {
            case Activation::LeakyRelu: h = tape.leaky_relu(h, layer.slope); break;
            case Activation::Tanh: h = tape.tanh(h); break;
            case Activation::Identity: break;
        }
    }
    return h;
}

struct MlpForward {
    NodeId output;
    NodeId input;
    MlpNodes params;
};

inline MlpForward mlp_forward_nodes(const Mlp& net, Tape& tape, const Tensor& input) {
    MlpForward fwd;
    fwd.input = tape.leaf(input);
    fwd.params = bind_mlp(net, tape);
    fwd.output = mlp_apply(net, fwd.params, tape, fwd.input);
    return fwd;
}

inline Tensor mlp_forward(const Mlp& net, const Tensor& input, Tape& tape) {
    Tensor out = tape.value(mlp_forward_nodes(net, tape, input).output);
    out.require_finite("mlp_forward output");
    return out;
}

// Forward evaluation without recording; the fast path for sampling loops
// that only need values.
inline Tensor mlp_value(const Mlp& net, const Tensor& input) {
    Tensor h = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const MlpLayer& layer = net.layers[l];
        if (h.cols() != layer.in_dim()) {
            throw std::invalid_argument(
                "mlp_forward: layer " + std::to_string(l) + " expects input dim " +
                std::to_string(layer.in_dim()) + ", got " + std::to_string(h.cols()));
        }
        Tensor z({h.rows(), layer.out_dim()});
        matmul(h, layer.weight, z);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += layer.bias[j];
        switch (layer.act) {
            case Activation::LeakyRelu:
                for (std::size_t i = 0; i < z.size(); ++i)
                    if (z[i] < 0.0) z[i] *= layer.slope;
                break;
            case Activation::Tanh:
                for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
                break;
            case Activation::Identity: break;
        }
        h = std::move(z);
    }
    return h;
}

struct ParamRef {
    std::string name;
    Tensor* tensor;
};

struct ConstParamRef {
    std::string name;
    const Tensor* tensor;
};

inline std::vector<ParamRef> mlp_params(Mlp& net, const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        refs.push_back({prefix + ".W" + std::to_string(l), &net.layers[l].weight});
        refs.push_back({prefix + ".b" + std::to_string(l), &net.layers[l].bias});
    }
    return refs;
}

inline std::vector<ConstParamRef> mlp_params(const Mlp& net, const std::string& prefix) {
    std::vector<ConstParamRef> refs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        refs.push_back({prefix + ".W" + std::to_string(l), &net.layers[l].weight});
        refs.push_back({prefix + ".b" + std::to_string(l), &net.layers[l].bias});
    }
    return refs;
}

}  // namespace lebm
