#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vidact/core/error.hpp"

namespace vidact {

/// Architecture of the audio-visual action/caption transformer.
struct ModelConfig {
    std::size_t d_audio = 32;
    std::size_t d_visual = 48;
    std::size_t d_text = 16;
    std::size_t d_model_av = 32;
    std::size_t d_model_text = 16;
    std::size_t d_model_dec = 32;
    std::size_t ff_multiplier = 4;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t heads = 4;
    std::size_t word_vocab = 0;
    std::size_t action_vocab = 0;
    std::size_t max_segment_length = 64;  // frames per modality
    std::size_t max_target_length = 24;   // tokens, excluding <sos>/<eos>
    std::size_t classifier_hidden = 64;
    std::size_t classifier_embedding = 16;
    std::vector<std::size_t> proposal_kernels{1, 3, 5};
    std::size_t proposal_hidden = 16;
    bool share_decoder_embeddings = false;

    /// Widths reported for the full-scale system.
    static ModelConfig full_scale(std::size_t word_vocab, std::size_t action_vocab) {
        ModelConfig c;
        c.d_audio = 768;
        c.d_visual = 1024;
        c.d_text = 300;
        c.d_model_av = 768;
        c.d_model_text = 300;
        c.d_model_dec = 300;
        c.ff_multiplier = 4;
        c.encoder_layers = 2;
        c.decoder_layers = 2;
        c.heads = 4;
        c.classifier_hidden = 300;
        c.classifier_embedding = 300;
        c.word_vocab = word_vocab;
        c.action_vocab = action_vocab;
        c.proposal_hidden = 256;
        c.proposal_kernels = {3, 9, 17, 33};
        return c;
    }

    std::size_t ff_width(std::size_t d_model) const { return ff_multiplier * d_model; }

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            require(v > 0, ErrorKind::Config, std::string("model config: ") + name + " must be positive");
        };
        positive(d_audio, "d_audio");
        positive(d_visual, "d_visual");
        positive(d_text, "d_text");
        positive(d_model_av, "d_model_av");
        positive(d_model_text, "d_model_text");
        positive(d_model_dec, "d_model_dec");
        positive(ff_multiplier, "ff_multiplier");
        positive(encoder_layers, "encoder_layers");
        positive(decoder_layers, "decoder_layers");
        positive(heads, "heads");
        positive(max_segment_length, "max_segment_length");
        positive(max_target_length, "max_target_length");
        positive(classifier_hidden, "classifier_hidden");
        positive(classifier_embedding, "classifier_embedding");
        positive(proposal_hidden, "proposal_hidden");
        require(word_vocab > 4 && action_vocab > 4, ErrorKind::Config,
                "model config: vocabularies must contain tokens beyond the specials");
        require(!proposal_kernels.empty(), ErrorKind::Config, "model config: no proposal kernels");
        for (std::size_t k : proposal_kernels) positive(k, "proposal kernel");
        for (auto [d, name] : {std::pair{d_model_av, "d_model_av"}, std::pair{d_model_text, "d_model_text"},
                               std::pair{d_model_dec, "d_model_dec"}})
            require(d % heads == 0, ErrorKind::Config,
                    std::string("model config: ") + name + "=" + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
        require(!share_decoder_embeddings || word_vocab == action_vocab, ErrorKind::Config,
                "model config: shared decoder embeddings need equal vocabulary sizes");
    }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, d_audio, d_visual, d_text, d_model_av,
                                                d_model_text, d_model_dec, ff_multiplier, encoder_layers,
                                                decoder_layers, heads, word_vocab, action_vocab,
                                                max_segment_length, max_target_length, classifier_hidden,
                                                classifier_embedding, proposal_kernels, proposal_hidden,
                                                share_decoder_embeddings)

}  // namespace vidact
