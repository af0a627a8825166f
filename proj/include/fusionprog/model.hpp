#pragma once

// The full network: per-modality encoders and projection heads, fusion and the
// two-logit classifier. Baselines switch off branches; a single-branch model
// classifies its own embedding and has no fusion.

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/hash.hpp"
#include "fusionprog/encoders.hpp"
#include "fusionprog/fusion.hpp"
#include "fusionprog/nn/layers.hpp"

namespace fusionprog {

struct Branches {
  bool adc = true;
  bool dwi = true;
  bool structured = true;

  int count() const { return int(adc) + int(dwi) + int(structured); }
  bool all() const { return count() == 3; }
  bool operator==(const Branches&) const = default;

  std::string to_string() const {
    std::string s;
    auto add = [&](bool on, const char* n) {
      if (!on) return;
      if (!s.empty()) s += ",";
      s += n;
    };
    add(adc, "adc");
    add(dwi, "dwi");
    add(structured, "structured");
    return s;
  }
};

struct ModelConfig {
  ImageEncoderConfig image;
  int projection_hidden = 128;
  StructuredEncoderConfig structured;
  FusionConfig fusion;
  Branches branches;
  bool normalize_embeddings = true;
  bool normalize_fused = true;  // applies to the FMCL input only
  int n_classes = 2;

  ProjectionConfig image_projection() const {
    return ProjectionConfig::for_features(image.feature_dim(), projection_hidden);
  }

  void validate() const {
    const int n = branches.count();
    if (n != 1 && n != 3) throw ConfigError("model: enable either one branch or all three");
    if (branches.adc || branches.dwi) {
      image.validate();
      image_projection().validate();
    }
    if (branches.structured) structured.validate();
    if (n_classes < 2) throw ConfigError("model: n_classes must be >= 2");
  }
};

inline std::string to_string(Backbone b) { return b == Backbone::SmallCnn ? "small_cnn" : "resnet50_style"; }
inline std::string to_string(FusionMode m) { return m == FusionMode::Hierarchical ? "hierarchical" : "average"; }

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.image.backbone)},
          {"in_channels", c.image.in_channels},
          {"cnn_channels", c.image.cnn_channels},
          {"resnet_blocks", c.image.resnet_blocks},
          {"resnet_width", c.image.resnet_width},
          {"projection_hidden", c.projection_hidden},
          {"structured_in_dim", c.structured.in_dim},
          {"structured_hidden", c.structured.hidden_dims},
          {"fusion", to_string(c.fusion.mode)},
          {"branches", c.branches.to_string()},
          {"normalize_embeddings", c.normalize_embeddings},
          {"normalize_fused", c.normalize_fused},
          {"n_classes", c.n_classes}};
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.image.backbone = j.at("backbone") == "small_cnn" ? Backbone::SmallCnn : Backbone::Resnet50Style;
  c.image.in_channels = j.at("in_channels");
  c.image.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
  c.image.resnet_blocks = j.at("resnet_blocks").get<std::vector<int>>();
  c.image.resnet_width = j.at("resnet_width");
  c.projection_hidden = j.at("projection_hidden");
  c.structured.in_dim = j.at("structured_in_dim");
  c.structured.hidden_dims = j.at("structured_hidden").get<std::vector<int>>();
  c.fusion.mode = j.at("fusion") == "hierarchical" ? FusionMode::Hierarchical : FusionMode::Average;
  const std::string br = j.at("branches");
  c.branches = {br.find("adc") != std::string::npos, br.find("dwi") != std::string::npos,
                br.find("structured") != std::string::npos};
  c.normalize_embeddings = j.at("normalize_embeddings");
  c.normalize_fused = j.at("normalize_fused");
  c.n_classes = j.at("n_classes");
  return c;
}

namespace nn {

/// Inputs for one batch of rows (views in stage 1, samples in stage 2).
/// Tensors of disabled branches are left empty.
template <class T>
struct BatchInputs {
  Tensor<T> adc, dwi;   // (N, slices, H, W)
  Tensor<T> structured; // (N, attrs)
};

template <class T>
struct Embeddings {
  Tensor<T> A, D, S;  // projected (and normalized when enabled)
  Tensor<T> M;        // fusion output, classifier input
  Tensor<T> Mn;       // normalized M, FMCL input
};

template <class T>
class FusionNetwork {
 public:
  static constexpr const char* kModuleOrder[] = {"adc_encoder",        "adc_projection", "dwi_encoder", "dwi_projection",
                                                 "structured_encoder", "fusion",         "classifier"};

  explicit FusionNetwork(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (cfg.branches.adc) {
      adc_enc_ = std::make_unique<ImageEncoder<T>>(cfg.image, "adc_encoder");
      adc_proj_ = std::make_unique<ProjectionHead<T>>(cfg.image_projection(), "adc_projection");
    }
    if (cfg.branches.dwi) {
      dwi_enc_ = std::make_unique<ImageEncoder<T>>(cfg.image, "dwi_encoder");
      dwi_proj_ = std::make_unique<ProjectionHead<T>>(cfg.image_projection(), "dwi_projection");
    }
    if (cfg.branches.structured) s_enc_ = std::make_unique<StructuredEncoder<T>>(cfg.structured, "structured_encoder");
    if (cfg.branches.all()) fusion_ = std::make_unique<Fusion<T>>(cfg.fusion, "fusion");
    classifier_ = std::make_unique<Linear<T>>(kEmbeddingDim, cfg.n_classes, "classifier", true);
  }
  FusionNetwork(const FusionNetwork&) = delete;
  FusionNetwork& operator=(const FusionNetwork&) = delete;

  const ModelConfig& config() const { return cfg_; }

  /// Present modules in canonical order; the fusion module is listed even in
  /// AVERAGE mode (it then has no parameters).
  std::vector<std::string> module_names() const {
    std::vector<std::string> out;
    for (const char* n : kModuleOrder)
      if (has_module(n)) out.emplace_back(n);
    return out;
  }

  bool has_module(const std::string& n) const {
    if (n == "adc_encoder" || n == "adc_projection") return cfg_.branches.adc;
    if (n == "dwi_encoder" || n == "dwi_projection") return cfg_.branches.dwi;
    if (n == "structured_encoder") return cfg_.branches.structured;
    if (n == "fusion") return cfg_.branches.all();
    return n == "classifier";
  }

  std::vector<Param<T>*> module_params(const std::string& n) {
    std::vector<Param<T>*> out;
    if (!has_module(n)) throw ShapeError("model has no module '" + n + "'");
    if (n == "adc_encoder") adc_enc_->collect(out);
    if (n == "adc_projection") adc_proj_->collect(out);
    if (n == "dwi_encoder") dwi_enc_->collect(out);
    if (n == "dwi_projection") dwi_proj_->collect(out);
    if (n == "structured_encoder") s_enc_->collect(out);
    if (n == "fusion") fusion_->collect(out);
    if (n == "classifier") classifier_->collect(out);
    return out;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (const auto& n : module_names())
      for (auto* p : module_params(n)) out.push_back(p);
    return out;
  }

  /// Each module draws from a stream keyed by its name, so a module's initial
  /// weights do not depend on which other branches exist.
  void init(std::uint64_t seed) {
    for (const auto& n : module_names()) {
      Fnv1a h;
      h.update(n);
      init_params(module_params(n), seed, h.digest());
    }
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Encode, project, normalize and fuse.
  Embeddings<T> embed(const BatchInputs<T>& in) {
    Embeddings<T> e;
    if (cfg_.branches.adc) e.A = branch_forward(*adc_enc_, adc_proj_.get(), nA_, in.adc);
    if (cfg_.branches.dwi) e.D = branch_forward(*dwi_enc_, dwi_proj_.get(), nD_, in.dwi);
    if (cfg_.branches.structured) {
      e.S = s_enc_->forward(in.structured);
      if (cfg_.normalize_embeddings) e.S = nS_.forward(e.S);
    }
    if (fusion_) {
      e.M = fusion_->forward(e.A, e.D, e.S);
      e.Mn = cfg_.normalize_fused ? nM_.forward(e.M) : e.M;
    } else {
      e.M = cfg_.branches.adc ? e.A : cfg_.branches.dwi ? e.D : e.S;
      e.Mn = e.M;
    }
    return e;
  }

  /// Gradients w.r.t. the outputs of the last embed(). Empty tensors mean zero.
  /// dM is w.r.t. the classifier input, dMn w.r.t. the FMCL input.
  void backward_embed(Tensor<T> dA, Tensor<T> dD, Tensor<T> dS, const Tensor<T>& dM, const Tensor<T>& dMn) {
    if (fusion_) {
      Tensor<T> dFused = dM;
      if (!dMn.data.empty()) {
        const Tensor<T> g = cfg_.normalize_fused ? nM_.backward(dMn) : dMn;
        if (dFused.data.empty())
          dFused = g;
        else
          dFused.matrix() += g.matrix();
      }
      if (!dFused.data.empty()) {
        auto g = fusion_->backward(dFused);
        accumulate(dA, g.dA);
        accumulate(dD, g.dD);
        accumulate(dS, g.dS);
      }
    } else {
      Tensor<T>& target = cfg_.branches.adc ? dA : cfg_.branches.dwi ? dD : dS;
      accumulate(target, dM);
      accumulate(target, dMn);
    }
    if (cfg_.branches.adc && !dA.data.empty()) branch_backward(*adc_enc_, adc_proj_.get(), nA_, dA);
    if (cfg_.branches.dwi && !dD.data.empty()) branch_backward(*dwi_enc_, dwi_proj_.get(), nD_, dD);
    if (cfg_.branches.structured && !dS.data.empty()) {
      if (cfg_.normalize_embeddings) dS = nS_.backward(dS);
      s_enc_->backward(dS);
    }
  }

  /// Classifier logits on the embedding M of the last embed().
  Tensor<T> classify(const Embeddings<T>& e) { return classifier_->forward(e.M); }

  /// Full stage-2 backward from logit gradients.
  void backward_logits(const Tensor<T>& dlogits) {
    const Tensor<T> dM = classifier_->backward(dlogits);
    backward_embed({}, {}, {}, dM, {});
  }

  Fusion<T>* fusion() { return fusion_.get(); }

 private:
  Tensor<T> branch_forward(ImageEncoder<T>& enc, ProjectionHead<T>* proj, L2Normalize<T>& norm, const Tensor<T>& x) {
    Tensor<T> h = proj->forward(enc.forward(x));
    return cfg_.normalize_embeddings ? norm.forward(h) : h;
  }
  void branch_backward(ImageEncoder<T>& enc, ProjectionHead<T>* proj, L2Normalize<T>& norm, Tensor<T> g) {
    if (cfg_.normalize_embeddings) g = norm.backward(g);
    enc.backward(proj->backward(g));
  }
  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    if (src.data.empty()) return;
    if (dst.data.empty())
      dst = src;
    else
      dst.matrix() += src.matrix();
  }

  ModelConfig cfg_;
  std::unique_ptr<ImageEncoder<T>> adc_enc_, dwi_enc_;
  std::unique_ptr<ProjectionHead<T>> adc_proj_, dwi_proj_;
  std::unique_ptr<StructuredEncoder<T>> s_enc_;
  std::unique_ptr<Fusion<T>> fusion_;
  std::unique_ptr<Linear<T>> classifier_;
  L2Normalize<T> nA_, nD_, nS_, nM_;
};

}  // namespace nn

}  // namespace fusionprog
