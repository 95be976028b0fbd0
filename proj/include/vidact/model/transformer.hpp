#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidact/core/rng.hpp"
#include "vidact/data/records.hpp"
#include "vidact/model/config.hpp"
#include "vidact/model/params.hpp"
#include "vidact/numerics/attention.hpp"
#include "vidact/numerics/ops.hpp"

namespace vidact {

enum class Head { Caption, Action };

inline std::string to_string(Head h) { return h == Head::Caption ? "caption" : "action"; }

/// Output of the modality encoders: audio/visual from the bimodal encoder E,
/// text from the text encoder T.
struct Encodings {
    Tensor audio;   // T_A x d_model_av
    Tensor visual;  // T_V x d_model_av
    Tensor text;    // T_T x d_model_text
};

/// A temporal segment proposal, in seconds.
struct Proposal {
    double onset = 0.0;
    double offset = 0.0;
    double confidence = 0.0;
};

/// Sinusoidal position table, rows x width.
inline std::vector<double> positional_encoding(std::size_t rows, std::size_t width) {
    std::vector<double> pe(rows * width);
    for (std::size_t pos = 0; pos < rows; ++pos)
        for (std::size_t i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double angle = static_cast<double>(pos) * rate;
            pe[pos * width + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

/// Audio-visual transformer with a text encoder, two autoregressive decoders
/// (caption D, action D'), a forward-only proposal generator G and a semantic
/// classifier S. Copies are deep.
class ActionTransformer {
public:
    struct LinearW {
        Tensor w, b;
    };
    struct NormW {
        Tensor gain, shift;
    };
    struct FeedForwardW {
        LinearW in, out;
    };
    struct SelfLayerW {
        NormW ln1;
        AttentionWeights attn;
        NormW ln2;
        FeedForwardW ff;
    };
    struct BimodalLayerW {
        NormW ln_a1, ln_v1;
        AttentionWeights self_a, self_v;
        NormW ln_a2, ln_v2;
        AttentionWeights cross_a, cross_v;  // audio queries visual, visual queries audio
        NormW ln_a3, ln_v3;
        FeedForwardW ff_a, ff_v;
    };
    struct DecoderLayerW {
        NormW ln1;
        AttentionWeights self_attn;
        NormW ln2;
        AttentionWeights cross;
        NormW ln3;
        FeedForwardW ff;
    };
    struct DecoderW {
        Tensor embedding;
        LinearW mem_a, mem_v, mem_t;
        std::vector<DecoderLayerW> layers;
        NormW ln_out;
        LinearW out;
    };
    struct ProposalScaleW {
        std::size_t kernel = 1;
        Tensor conv, conv_b, head, head_b;
    };
    struct ClassifierW {
        Tensor action_embedding, word_embedding;
        LinearW hidden, out;
    };

    ActionTransformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
        config_.validate();
        Rng rng(seed);
        declare(&rng);
    }

    /// Adopts existing parameters (e.g. from a checkpoint); names and shapes are validated.
    ActionTransformer(ModelConfig config, ParamStore params)
        : config_(std::move(config)), params_(std::move(params)) {
        config_.validate();
        declare(nullptr);
        require(params_.size() == declared_, ErrorKind::Config,
                "checkpoint holds " + std::to_string(params_.size()) + " tensors, architecture declares " +
                    std::to_string(declared_));
    }

    ActionTransformer(const ActionTransformer& other) : config_(other.config_), params_(other.params_) {
        declare(nullptr);
    }
    ActionTransformer& operator=(const ActionTransformer& other) {
        if (this != &other) {
            config_ = other.config_;
            params_ = other.params_;
            declared_ = 0;
            declare(nullptr);
        }
        return *this;
    }

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // ---- encoders -------------------------------------------------------

    Encodings encode(const FeatureBundle& bundle) const {
        check_features(bundle.audio, config_.d_audio, "audio");
        check_features(bundle.visual, config_.d_visual, "visual");
        check_features(bundle.text, config_.d_text, "text");

        Tensor a = with_positions(linear(bundle.audio, enc_.in_a));
        Tensor v = with_positions(linear(bundle.visual, enc_.in_v));
        for (const auto& layer : enc_layers_) {
            const Tensor an = norm(a, layer.ln_a1);
            const Tensor vn = norm(v, layer.ln_v1);
            a = ops::add(a, ops::multi_head_attention(an, an, an, layer.self_a, config_.heads));
            v = ops::add(v, ops::multi_head_attention(vn, vn, vn, layer.self_v, config_.heads));
            const Tensor ac = norm(a, layer.ln_a2);
            const Tensor vc = norm(v, layer.ln_v2);
            a = ops::add(a, ops::multi_head_attention(ac, vc, vc, layer.cross_a, config_.heads));
            v = ops::add(v, ops::multi_head_attention(vc, ac, ac, layer.cross_v, config_.heads));
            a = ops::add(a, feed_forward(norm(a, layer.ln_a3), layer.ff_a));
            v = ops::add(v, feed_forward(norm(v, layer.ln_v3), layer.ff_v));
        }

        Tensor t = with_positions(linear(bundle.text, text_.in));
        for (const auto& layer : text_layers_) t = self_layer(t, layer, std::nullopt);

        return {norm(a, enc_.ln_a), norm(v, enc_.ln_v), norm(t, text_.ln)};
    }

    // ---- decoders -------------------------------------------------------

    /// Cross-attention memory of a decoder: [h_A; h_V; h_T] projected to the decoder width.
    Tensor memory(const Encodings& enc, Head head) const {
        const DecoderW& d = decoder(head);
        return ops::concat_rows({linear(enc.audio, d.mem_a), linear(enc.visual, d.mem_v), linear(enc.text, d.mem_t)});
    }

    std::size_t vocab_size(Head head) const {
        return head == Head::Caption ? config_.word_vocab : config_.action_vocab;
    }

    Tensor embed_tokens(Head head, const std::vector<int>& ids) const {
        return ops::embedding(decoder(head).embedding, ids);
    }

    /// Expected embedding under token distributions `probs` (rows x vocab).
    Tensor embed_soft(Head head, const Tensor& probs) const {
        return ops::matmul(probs, decoder(head).embedding);
    }

    /// Causal decoder over input embeddings; returns logits for every position.
    Tensor decoder_logits(Head head, const Tensor& memory, const Tensor& inputs) const {
        const DecoderW& d = decoder(head);
        const std::size_t len = inputs.rows();
        require(len >= 1 && len <= config_.max_target_length + 1, ErrorKind::Data,
                "sequence length " + std::to_string(len) + " outside [1, " +
                    std::to_string(config_.max_target_length + 1) + "]");
        const auto mask = AttentionMask::causal(len, len);
        Tensor x = with_positions(inputs);
        for (const auto& layer : d.layers) {
            const Tensor xn = norm(x, layer.ln1);
            x = ops::add(x, ops::multi_head_attention(xn, xn, xn, layer.self_attn, config_.heads, mask));
            const Tensor xc = norm(x, layer.ln2);
            x = ops::add(x, ops::multi_head_attention(xc, memory, memory, layer.cross, config_.heads));
            x = ops::add(x, feed_forward(norm(x, layer.ln3), layer.ff));
        }
        return linear(norm(x, d.ln_out), d.out);
    }

    /// Next-token logits after `prefix`, which must start with <sos>.
    Tensor decode_step(const Encodings& enc, const std::vector<int>& prefix, Head head) const {
        require(!prefix.empty() && prefix.front() == kSos, ErrorKind::Data, "decode prefix must begin with <sos>");
        require(prefix.size() <= config_.max_target_length + 1, ErrorKind::Data,
                "sequence length: prefix of " + std::to_string(prefix.size()) + " tokens exceeds maximum " +
                    std::to_string(config_.max_target_length + 1));
        const Tensor logits = decoder_logits(head, memory(enc, head), embed_tokens(head, prefix));
        return ops::reshape(ops::slice_rows(logits, prefix.size() - 1, prefix.size()), {vocab_size(head)});
    }

    // ---- proposal generator (forward only) ------------------------------

    std::vector<Proposal> propose_segments(const Encodings& enc, double threshold, double frame_period = 1.0) const {
        NoGradGuard no_grad;
        const std::size_t frames = std::min(enc.audio.rows(), enc.visual.rows());
        const Tensor input = ops::concat_cols(
            {ops::slice_rows(enc.audio, 0, frames), ops::slice_rows(enc.visual, 0, frames)});
        std::vector<Proposal> out;
        for (const auto& scale : proposal_) {
            if (frames < scale.kernel) continue;
            const Tensor hidden = ops::relu(ops::add_bias(ops::conv1d_time(input, scale.conv), scale.conv_b));
            const Tensor raw = ops::add_bias(ops::conv1d_time(hidden, scale.head), scale.head_b);
            const double k = static_cast<double>(scale.kernel);
            for (std::size_t t = 0; t < raw.rows(); ++t) {
                const double confidence = ops::detail::stable_sigmoid(raw.at(t, 0));
                if (!(confidence > threshold)) continue;
                const double center = static_cast<double>(t) + 0.5 * k * (1.0 + std::tanh(raw.at(t, 1)));
                const double length = k * std::exp(std::clamp(raw.at(t, 2), -4.0, 4.0));
                const double onset = std::max(0.0, center - 0.5 * length) * frame_period;
                double offset = (center + 0.5 * length) * frame_period;
                if (!(offset > onset)) offset = std::nextafter(onset, onset + 1.0);
                out.push_back({onset, offset, confidence});
            }
        }
        std::stable_sort(out.begin(), out.end(),
                         [](const Proposal& x, const Proposal& y) { return x.confidence > y.confidence; });
        return out;
    }

    // ---- semantic classifier --------------------------------------------

    Tensor classifier_embed_actions(const std::vector<int>& ids) const {
        return ops::embedding(cls_.action_embedding, ids);
    }
    Tensor classifier_embed_soft_actions(const Tensor& probs) const {
        return ops::matmul(probs, cls_.action_embedding);
    }
    Tensor classifier_embed_words(const std::vector<int>& ids) const {
        return ops::embedding(cls_.word_embedding, ids);
    }

    /// Pre-sigmoid score that an action sequence and a caption share semantics.
    Tensor classifier_logit(const Tensor& action_emb, const Tensor& caption_emb) const {
        require(action_emb.rows() > 0 && caption_emb.rows() > 0, ErrorKind::Data,
                "semantic classifier needs two nonempty sequences");
        const Tensor pooled = ops::concat_cols({ops::mean_rows(action_emb), ops::mean_rows(caption_emb)});
        const Tensor hidden = ops::relu(linear(pooled, cls_.hidden));
        return ops::reshape(linear(hidden, cls_.out), {1});
    }

    Tensor classify_semantic(const Tensor& action_emb, const Tensor& caption_emb) const {
        return ops::sigmoid(classifier_logit(action_emb, caption_emb));
    }

    const DecoderW& decoder(Head head) const { return head == Head::Caption ? caption_dec_ : action_dec_; }

private:
    enum class Init { Weight, Zero, One, Embedding };

    // Declares every parameter once. With an rng it creates and initializes;
    // without one it binds to tensors already held in params_.
    void declare(Rng* rng) {
        declared_ = 0;
        const auto& c = config_;
        auto p = [&](const std::string& name, Submodule owner, Shape shape, Init init, std::size_t fan_in = 1) {
            ++declared_;
            if (!rng) {
                const Tensor& t = params_.get(name);
                require(t.shape() == shape, ErrorKind::Dimension,
                        "parameter '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                            shape_string(shape));
                require(params_.owner(name) == owner, ErrorKind::Config,
                        "parameter '" + name + "' tagged " + to_string(params_.owner(name)) + ", expected " +
                            to_string(owner));
                return t;
            }
            Rng local = rng->derive(stable_hash(name));
            std::vector<double> v(element_count(shape), 0.0);
            switch (init) {
                case Init::Weight: {
                    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
                    for (auto& e : v) e = local.normal(0.0, s);
                    break;
                }
                case Init::Embedding:
                    for (auto& e : v) e = local.normal(0.0, 1.0);
                    break;
                case Init::One: std::fill(v.begin(), v.end(), 1.0); break;
                case Init::Zero: break;
            }
            return params_.add(name, owner, Tensor(std::move(shape), std::move(v)));
        };
        auto lin = [&](const std::string& name, Submodule owner, std::size_t in, std::size_t out) {
            return LinearW{p(name + ".w", owner, {in, out}, Init::Weight, in), p(name + ".b", owner, {out}, Init::Zero)};
        };
        auto ln = [&](const std::string& name, Submodule owner, std::size_t d) {
            return NormW{p(name + ".gain", owner, {d}, Init::One), p(name + ".shift", owner, {d}, Init::Zero)};
        };
        auto attn = [&](const std::string& name, Submodule owner, std::size_t d) {
            const auto q = lin(name + ".q", owner, d, d);
            const Tensor wk = p(name + ".k.w", owner, {d, d}, Init::Weight, d);
            const auto v = lin(name + ".v", owner, d, d), o = lin(name + ".o", owner, d, d);
            return AttentionWeights{q.w, q.b, wk, Tensor{}, v.w, v.b, o.w, o.b};
        };
        auto ff = [&](const std::string& name, Submodule owner, std::size_t d) {
            return FeedForwardW{lin(name + ".in", owner, d, c.ff_width(d)), lin(name + ".out", owner, c.ff_width(d), d)};
        };

        // E: bimodal audio-visual encoder
        enc_.in_a = lin("E.in_audio", Submodule::E, c.d_audio, c.d_model_av);
        enc_.in_v = lin("E.in_visual", Submodule::E, c.d_visual, c.d_model_av);
        enc_layers_.clear();
        for (std::size_t l = 0; l < c.encoder_layers; ++l) {
            const std::string n = "E.layer" + std::to_string(l);
            BimodalLayerW w;
            w.ln_a1 = ln(n + ".ln_a1", Submodule::E, c.d_model_av);
            w.ln_v1 = ln(n + ".ln_v1", Submodule::E, c.d_model_av);
            w.self_a = attn(n + ".self_a", Submodule::E, c.d_model_av);
            w.self_v = attn(n + ".self_v", Submodule::E, c.d_model_av);
            w.ln_a2 = ln(n + ".ln_a2", Submodule::E, c.d_model_av);
            w.ln_v2 = ln(n + ".ln_v2", Submodule::E, c.d_model_av);
            w.cross_a = attn(n + ".cross_a", Submodule::E, c.d_model_av);
            w.cross_v = attn(n + ".cross_v", Submodule::E, c.d_model_av);
            w.ln_a3 = ln(n + ".ln_a3", Submodule::E, c.d_model_av);
            w.ln_v3 = ln(n + ".ln_v3", Submodule::E, c.d_model_av);
            w.ff_a = ff(n + ".ff_a", Submodule::E, c.d_model_av);
            w.ff_v = ff(n + ".ff_v", Submodule::E, c.d_model_av);
            enc_layers_.push_back(std::move(w));
        }
        enc_.ln_a = ln("E.ln_audio", Submodule::E, c.d_model_av);
        enc_.ln_v = ln("E.ln_visual", Submodule::E, c.d_model_av);

        // T: text encoder
        text_.in = lin("T.in", Submodule::T, c.d_text, c.d_model_text);
        text_layers_.clear();
        for (std::size_t l = 0; l < c.encoder_layers; ++l) {
            const std::string n = "T.layer" + std::to_string(l);
            text_layers_.push_back(SelfLayerW{ln(n + ".ln1", Submodule::T, c.d_model_text),
                                              attn(n + ".self", Submodule::T, c.d_model_text),
                                              ln(n + ".ln2", Submodule::T, c.d_model_text),
                                              ff(n + ".ff", Submodule::T, c.d_model_text)});
        }
        text_.ln = ln("T.ln", Submodule::T, c.d_model_text);

        // D and D'
        auto dec = [&](const std::string& n, Submodule owner, std::size_t vocab, const Tensor* shared_embedding) {
            DecoderW d;
            d.embedding = shared_embedding ? *shared_embedding
                                           : p(n + ".embedding", owner, {vocab, c.d_model_dec}, Init::Embedding);
            d.mem_a = lin(n + ".mem_audio", owner, c.d_model_av, c.d_model_dec);
            d.mem_v = lin(n + ".mem_visual", owner, c.d_model_av, c.d_model_dec);
            d.mem_t = lin(n + ".mem_text", owner, c.d_model_text, c.d_model_dec);
            for (std::size_t l = 0; l < c.decoder_layers; ++l) {
                const std::string ln_name = n + ".layer" + std::to_string(l);
                d.layers.push_back(DecoderLayerW{ln(ln_name + ".ln1", owner, c.d_model_dec),
                                                 attn(ln_name + ".self", owner, c.d_model_dec),
                                                 ln(ln_name + ".ln2", owner, c.d_model_dec),
                                                 attn(ln_name + ".cross", owner, c.d_model_dec),
                                                 ln(ln_name + ".ln3", owner, c.d_model_dec),
                                                 ff(ln_name + ".ff", owner, c.d_model_dec)});
            }
            d.ln_out = ln(n + ".ln_out", owner, c.d_model_dec);
            d.out = lin(n + ".out", owner, c.d_model_dec, vocab);
            return d;
        };
        action_dec_ = dec("Dp", Submodule::DPrime, c.action_vocab, nullptr);
        caption_dec_ = dec("D", Submodule::D, c.word_vocab,
                           c.share_decoder_embeddings ? &action_dec_.embedding : nullptr);

        // G: proposal generator over [h_A | h_V]
        proposal_.clear();
        for (std::size_t k : c.proposal_kernels) {
            const std::string n = "G.k" + std::to_string(k);
            ProposalScaleW s;
            s.kernel = k;
            s.conv = p(n + ".conv", Submodule::G, {k, 2 * c.d_model_av, c.proposal_hidden}, Init::Weight,
                       k * 2 * c.d_model_av);
            s.conv_b = p(n + ".conv_b", Submodule::G, {c.proposal_hidden}, Init::Zero);
            s.head = p(n + ".head", Submodule::G, {1, c.proposal_hidden, 3}, Init::Weight, c.proposal_hidden);
            s.head_b = p(n + ".head_b", Submodule::G, {3}, Init::Zero);
            proposal_.push_back(std::move(s));
        }

        // S: semantic classifier
        cls_.action_embedding = p("S.action_embedding", Submodule::S, {c.action_vocab, c.classifier_embedding},
                                  Init::Embedding);
        cls_.word_embedding = p("S.word_embedding", Submodule::S, {c.word_vocab, c.classifier_embedding},
                                Init::Embedding);
        cls_.hidden = lin("S.hidden", Submodule::S, 2 * c.classifier_embedding, c.classifier_hidden);
        // zero output layer: an untrained classifier answers exactly 0.5
        cls_.out = LinearW{p("S.out.w", Submodule::S, {c.classifier_hidden, 1}, Init::Zero),
                           p("S.out.b", Submodule::S, {1}, Init::Zero)};
    }

    void check_features(const Tensor& x, std::size_t dim, const char* what) const {
        require(x.defined() && x.rank() == 2 && x.cols() == dim, ErrorKind::Config,
                std::string(what) + " features " + (x.defined() ? shape_string(x.shape()) : "[undefined]") +
                    " do not match configured dimension " + std::to_string(dim));
        require(x.rows() >= 1, ErrorKind::Data, std::string(what) + " features have no frames");
        require(x.rows() <= config_.max_segment_length, ErrorKind::Data,
                std::string(what) + " sequence of " + std::to_string(x.rows()) + " frames exceeds maximum " +
                    std::to_string(config_.max_segment_length));
    }

    static Tensor linear(const Tensor& x, const LinearW& w) { return ops::linear(x, w.w, w.b); }
    static Tensor norm(const Tensor& x, const NormW& w) { return ops::layer_norm(x, w.gain, w.shift); }
    static Tensor feed_forward(const Tensor& x, const FeedForwardW& w) {
        return linear(ops::relu(linear(x, w.in)), w.out);
    }
    static Tensor with_positions(const Tensor& x) {
        return ops::add_constant(x, positional_encoding(x.rows(), x.cols()));
    }
    Tensor self_layer(Tensor x, const SelfLayerW& layer, const std::optional<AttentionMask>& mask) const {
        const Tensor xn = norm(x, layer.ln1);
        x = ops::add(x, ops::multi_head_attention(xn, xn, xn, layer.attn, config_.heads, mask));
        return ops::add(x, feed_forward(norm(x, layer.ln2), layer.ff));
    }

    ModelConfig config_;
    ParamStore params_;
    std::size_t declared_ = 0;

    struct {
        LinearW in_a, in_v;
        NormW ln_a, ln_v;
    } enc_;
    std::vector<BimodalLayerW> enc_layers_;
    struct {
        LinearW in;
        NormW ln;
    } text_;
    std::vector<SelfLayerW> text_layers_;
    DecoderW caption_dec_, action_dec_;
    std::vector<ProposalScaleW> proposal_;
    ClassifierW cls_;
};

}  // namespace vidact
