// Language discriminator: a two-hidden-layer feed-forward classifier over
// the decoder's first-time-step outputs. Hidden width equals the embedding
// width; the output layer has one logit per language.
//
// It plays two roles. During DAE steps it is trained on detached first-step
// outputs, so only theta_LD learns. During BT steps it is frozen (its
// weights enter the forward pass as detached views) and its loss shapes the
// encoder/decoder through the graph-linked first-step outputs instead.
#pragma once

#include <stdexcept>
#include <string>

#include "unmt/corpus.hpp"
#include "unmt/model.hpp"
#include "unmt/params.hpp"
#include "unmt/tensor.hpp"

namespace unmt {

struct DiscriminatorParams {
    size_t width = 0;  // embedding width d
    ParamSet set;

    DiscriminatorParams() = default;

    DiscriminatorParams(size_t embed_dim, Rng& rng) : width(embed_dim) {
        set.add("ld.w1", xavier_uniform({width, width}, rng));
        set.add("ld.b1", const_init({width}, 0.0));
        set.add("ld.w2", xavier_uniform({width, width}, rng));
        set.add("ld.b2", const_init({width}, 0.0));
        set.add("ld.w3", xavier_uniform({width, 2}, rng));
        set.add("ld.b3", const_init({2}, 0.0));
    }
};

// Language logits (batch x 2). With frozen=true the weights participate as
// detached copies, so no gradient can reach theta_LD.
inline Tensor ld_forward(Graph* g, const DiscriminatorParams& ld, const Tensor& outputs,
                         bool frozen = false) {
    if (outputs.shape().size() != 2 || outputs.shape()[1] != ld.width)
        throw std::invalid_argument("ld_forward: input width does not match the discriminator");
    auto weight = [&](const std::string& name) {
        return frozen ? ld.set.at(name).detach() : ld.set.at(name);
    };
    Tensor h = relu(g, add_bias(g, matmul(g, outputs, weight("ld.w1")), weight("ld.b1")));
    h = relu(g, add_bias(g, matmul(g, h, weight("ld.w2")), weight("ld.b2")));
    return add_bias(g, matmul(g, h, weight("ld.w3")), weight("ld.b3"));
}

// Mean over the batch of -log p(label | LD(outputs)).
inline Tensor ld_loss(Graph* g, const DiscriminatorParams& ld, const Tensor& outputs, int label,
                      bool frozen = false) {
    if (label != 0 && label != 1) throw std::invalid_argument("ld_loss: label must be 0 or 1");
    Tensor logits = ld_forward(g, ld, outputs, frozen);
    const size_t n = outputs.shape()[0];
    return cross_entropy_rows(g, logits, std::vector<int>(n, label), std::vector<double>(n, 1.0));
}

inline Tensor ld_loss(Graph* g, const DiscriminatorParams& ld, const FirstStepOutput& outputs,
                      Lang label, bool frozen = false) {
    return ld_loss(g, ld, outputs.hidden, static_cast<int>(label), frozen);
}

}  // namespace unmt
