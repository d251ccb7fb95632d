#pragma once

#include <string>
#include <vector>

#include "mcd/tape.hpp"

namespace mcd {

struct EncoderConfig {
  int dz = 64;         // model width and concept dimension
  int depth = 4;       // self-attention layers
  int heads = 4;
  int mlp_hidden = 64; // hidden width of the per-modality embed MLPs
  int ffn = 128;       // transformer feed-forward width
  int t_context = 20;

  void validate() const {
    if (depth < 1) throw ValidationError("encoder: depth must be >= 1");
    if (heads < 1 || dz % heads != 0) {
      throw ValidationError("encoder: dz must be divisible by head count");
    }
    if (t_context < 1) throw ValidationError("encoder: t_context must be >= 1");
  }
};

struct ReconNetConfig {
  int depth = 4;
  int heads = 4;
  int mlp_hidden = 64;
  int ffn = 128;
  int dec_hidden = 128;  // hidden width of the 3-layer decoder MLPs
};

namespace detail {

inline double fan_in_std(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace detail

template <class S>
struct Mlp2 {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;

  static Mlp2 create(ParamStore<S>& store, const std::string& prefix, int in, int hidden,
                     int out, Rng& rng) {
    Mlp2 m;
    m.w1 = store.add(prefix + ".w1", in, hidden, detail::fan_in_std(in), rng);
    m.b1 = store.add_constant(prefix + ".b1", 1, hidden, 0.0);
    m.w2 = store.add(prefix + ".w2", hidden, out, detail::fan_in_std(hidden), rng);
    m.b2 = store.add_constant(prefix + ".b2", 1, out, 0.0);
    return m;
  }

  int forward(Tape<S>& tape, int x) const {
    int h = tape.add_row_broadcast(tape.matmul(x, tape.param(w1)), tape.param(b1));
    h = tape.gelu(h);
    return tape.add_row_broadcast(tape.matmul(h, tape.param(w2)), tape.param(b2));
  }
};

template <class S>
struct Mlp3 {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1, w3 = -1, b3 = -1;

  static Mlp3 create(ParamStore<S>& store, const std::string& prefix, int in, int hidden,
                     int out, Rng& rng) {
    Mlp3 m;
    m.w1 = store.add(prefix + ".w1", in, hidden, detail::fan_in_std(in), rng);
    m.b1 = store.add_constant(prefix + ".b1", 1, hidden, 0.0);
    m.w2 = store.add(prefix + ".w2", hidden, hidden, detail::fan_in_std(hidden), rng);
    m.b2 = store.add_constant(prefix + ".b2", 1, hidden, 0.0);
    m.w3 = store.add(prefix + ".w3", hidden, out, detail::fan_in_std(hidden), rng);
    m.b3 = store.add_constant(prefix + ".b3", 1, out, 0.0);
    return m;
  }

  int forward(Tape<S>& tape, int x) const {
    int h = tape.add_row_broadcast(tape.matmul(x, tape.param(w1)), tape.param(b1));
    h = tape.gelu(h);
    h = tape.add_row_broadcast(tape.matmul(h, tape.param(w2)), tape.param(b2));
    h = tape.gelu(h);
    return tape.add_row_broadcast(tape.matmul(h, tape.param(w3)), tape.param(b3));
  }
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
template <class S>
struct TransformerBlock {
  int ln1_g = -1, ln1_b = -1;
  std::array<int, 4> attn_w{};  // wq, wk, wv, wo
  std::array<int, 4> attn_b{};
  int ln2_g = -1, ln2_b = -1;
  int ffn_w1 = -1, ffn_b1 = -1, ffn_w2 = -1, ffn_b2 = -1;

  static TransformerBlock create(ParamStore<S>& store, const std::string& prefix, int dim,
                                 int ffn, Rng& rng) {
    TransformerBlock blk;
    blk.ln1_g = store.add_constant(prefix + ".ln1.g", 1, dim, 1.0);
    blk.ln1_b = store.add_constant(prefix + ".ln1.b", 1, dim, 0.0);
    const char* names[4] = {"wq", "wk", "wv", "wo"};
    const char* bnames[4] = {"bq", "bk", "bv", "bo"};
    for (int i = 0; i < 4; ++i) {
      blk.attn_w[static_cast<std::size_t>(i)] =
          store.add(prefix + ".attn." + names[i], dim, dim, detail::fan_in_std(dim), rng);
      blk.attn_b[static_cast<std::size_t>(i)] =
          store.add_constant(prefix + ".attn." + bnames[i], 1, dim, 0.0);
    }
    blk.ln2_g = store.add_constant(prefix + ".ln2.g", 1, dim, 1.0);
    blk.ln2_b = store.add_constant(prefix + ".ln2.b", 1, dim, 0.0);
    blk.ffn_w1 = store.add(prefix + ".ffn.w1", dim, ffn, detail::fan_in_std(dim), rng);
    blk.ffn_b1 = store.add_constant(prefix + ".ffn.b1", 1, ffn, 0.0);
    blk.ffn_w2 = store.add(prefix + ".ffn.w2", ffn, dim, detail::fan_in_std(ffn), rng);
    blk.ffn_b2 = store.add_constant(prefix + ".ffn.b2", 1, dim, 0.0);
    return blk;
  }

  int forward(Tape<S>& tape, int x, int windows, int heads, bool causal) const {
    int normed = tape.layer_norm(x, tape.param(ln1_g), tape.param(ln1_b));
    std::array<int, 4> w{tape.param(attn_w[0]), tape.param(attn_w[1]), tape.param(attn_w[2]),
                         tape.param(attn_w[3])};
    std::array<int, 4> b{tape.param(attn_b[0]), tape.param(attn_b[1]), tape.param(attn_b[2]),
                         tape.param(attn_b[3])};
    x = tape.add(x, tape.mha(normed, w, b, windows, heads, causal));
    int normed2 = tape.layer_norm(x, tape.param(ln2_g), tape.param(ln2_b));
    int h = tape.add_row_broadcast(tape.matmul(normed2, tape.param(ffn_w1)), tape.param(ffn_b1));
    h = tape.gelu(h);
    h = tape.add_row_broadcast(tape.matmul(h, tape.param(ffn_w2)), tape.param(ffn_b2));
    return tape.add(x, h);
  }
};

// Concept encoder: per-modality 2-layer MLPs summed, learnable temporal
// embedding, full self-attention stack, unit-norm output rows.
template <class S>
struct EncoderNet {
  EncoderConfig cfg;
  std::vector<Mlp2<S>> embeds;
  int temporal = -1;
  std::vector<TransformerBlock<S>> blocks;

  static EncoderNet create(ParamStore<S>& store, const EncoderConfig& cfg,
                           const std::vector<ModalitySpec>& specs, Rng& rng) {
    cfg.validate();
    EncoderNet net;
    net.cfg = cfg;
    for (const auto& m : specs) {
      net.embeds.push_back(
          Mlp2<S>::create(store, "encoder.embed." + m.name, m.dim, cfg.mlp_hidden, cfg.dz, rng));
    }
    net.temporal = store.add("encoder.temporal", cfg.t_context, cfg.dz, 0.02, rng);
    for (int i = 0; i < cfg.depth; ++i) {
      net.blocks.push_back(TransformerBlock<S>::create(
          store, "encoder.block" + std::to_string(i), cfg.dz, cfg.ffn, rng));
    }
    return net;
  }

  // modality_inputs: one (B*T) x dim_m node per modality.
  int embed_frames(Tape<S>& tape, const std::vector<int>& modality_inputs) const {
    int sum = -1;
    for (std::size_t m = 0; m < embeds.size(); ++m) {
      const int e = embeds[m].forward(tape, modality_inputs[m]);
      sum = (sum < 0) ? e : tape.add(sum, e);
    }
    return sum;
  }

  int encode(Tape<S>& tape, const std::vector<int>& modality_inputs, int windows) const {
    int x = embed_frames(tape, modality_inputs);
    x = tape.add_tiled(x, tape.param(temporal), windows);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      x = blocks[i].forward(tape, x, windows, cfg.heads, /*causal=*/false);
      tape.check_finite(x, "encoder layer " + std::to_string(i));
    }
    return tape.unit_norm_rows(x);
  }
};

// Shared shape of the CMCN and the MHFP: modality embed MLPs plus a concept
// embed MLP summed, temporal embedding, transformer, per-modality 3-layer
// decoders. The MHFP additionally embeds the coherence input and runs causal.
template <class S>
struct ReconNet {
  ReconNetConfig cfg;
  int dz = 0;
  bool causal = false;
  std::vector<Mlp2<S>> embeds;
  Mlp2<S> concept_embed;
  Mlp2<S> eps_embed;  // only used when has_eps
  bool has_eps = false;
  int temporal = -1;
  std::vector<TransformerBlock<S>> blocks;
  std::vector<Mlp3<S>> decoders;

  static ReconNet create(ParamStore<S>& store, const std::string& prefix,
                         const ReconNetConfig& cfg, int dz, int t_context,
                         const std::vector<ModalitySpec>& specs, bool causal, bool with_eps,
                         Rng& rng) {
    ReconNet net;
    net.cfg = cfg;
    net.dz = dz;
    net.causal = causal;
    net.has_eps = with_eps;
    for (const auto& m : specs) {
      net.embeds.push_back(
          Mlp2<S>::create(store, prefix + ".embed." + m.name, m.dim, cfg.mlp_hidden, dz, rng));
    }
    net.concept_embed =
        Mlp2<S>::create(store, prefix + ".embed.concept", dz, cfg.mlp_hidden, dz, rng);
    if (with_eps) {
      net.eps_embed = Mlp2<S>::create(store, prefix + ".embed.eps", 1, cfg.mlp_hidden, dz, rng);
    }
    net.temporal = store.add(prefix + ".temporal", t_context, dz, 0.02, rng);
    for (int i = 0; i < cfg.depth; ++i) {
      net.blocks.push_back(
          TransformerBlock<S>::create(store, prefix + ".block" + std::to_string(i), dz, cfg.ffn, rng));
    }
    for (const auto& m : specs) {
      net.decoders.push_back(
          Mlp3<S>::create(store, prefix + ".dec." + m.name, dz, cfg.dec_hidden, m.dim, rng));
    }
    return net;
  }

  // Returns one prediction node per modality. `concepts` is the (B*T) x dz
  // latent node; `eps_rows`, when present, is a (B*T) x 1 input node.
  std::vector<int> forward(Tape<S>& tape, const std::vector<int>& modality_inputs,
                           int concepts, int eps_rows, int windows,
                           const std::string& where) const {
    int x = -1;
    for (std::size_t m = 0; m < embeds.size(); ++m) {
      const int e = embeds[m].forward(tape, modality_inputs[m]);
      x = (x < 0) ? e : tape.add(x, e);
    }
    x = tape.add(x, concept_embed.forward(tape, concepts));
    if (has_eps) {
      if (eps_rows < 0) throw ValidationError(where + ": eps input required");
      x = tape.add(x, eps_embed.forward(tape, eps_rows));
    }
    x = tape.add_tiled(x, tape.param(temporal), windows);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      x = blocks[i].forward(tape, x, windows, cfg.heads, causal);
      tape.check_finite(x, where + " layer " + std::to_string(i));
    }
    std::vector<int> preds;
    preds.reserve(decoders.size());
    for (const auto& dec : decoders) {
      preds.push_back(dec.forward(tape, x));
    }
    return preds;
  }
};

}  // namespace mcd
