#pragma once

#include "support/finite_difference.hpp"
#include "vidact/data/records.hpp"
#include "vidact/model/config.hpp"

namespace vidact::testing {

inline ModelConfig tiny_config() {
    ModelConfig c;
    c.d_audio = 6;
    c.d_visual = 10;
    c.d_text = 5;
    c.d_model_av = 8;
    c.d_model_text = 8;
    c.d_model_dec = 8;
    c.ff_multiplier = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.heads = 2;
    c.word_vocab = 12;
    c.action_vocab = 9;
    c.max_target_length = 8;
    c.classifier_hidden = 6;
    c.classifier_embedding = 4;
    c.proposal_kernels = {1, 3};
    c.proposal_hidden = 4;
    return c;
}

inline FeatureBundle random_bundle(const ModelConfig& c, Rng& rng, std::size_t ta = 4, std::size_t tv = 5,
                                   std::size_t tt = 3) {
    return {random_tensor({ta, c.d_audio}, rng, 1.0, false), random_tensor({tv, c.d_visual}, rng, 1.0, false),
            random_tensor({tt, c.d_text}, rng, 1.0, false), true};
}

}  // namespace vidact::testing
