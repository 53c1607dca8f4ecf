#include "ifg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ifg {

namespace {

using nlohmann::json;

// Reads fields present in a JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: " + path_ + "." + key + ": " + e.what());
    }
  }

  void operator()(const char* key, RecallMode& mode) {
    std::string s(recall_mode_name(mode));
    (*this)(key, s);
    if (s == "R11") mode = RecallMode::kR11;
    else if (s == "R40") mode = RecallMode::kR40;
    else throw std::invalid_argument("config: " + path_ + "." + key + " must be \"R11\" or \"R40\"");
  }

  template <class F>
  void section(const char* key, F&& visit_fields) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), path_ + "." + key);
    visit_fields(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw std::invalid_argument("config: unknown key " + path_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <class T>
  void operator()(const char* key, const T& value) {
    j_[key] = value;
  }
  void operator()(const char* key, const RecallMode& mode) { j_[key] = std::string(recall_mode_name(mode)); }

  template <class F>
  void section(const char* key, F&& visit_fields) {
    Writer sub(j_[key]);
    visit_fields(sub);
  }

 private:
  json& j_;
};

template <class V, class C>
void visit_scene(V& v, C& c) {
  v("x_min", c.x_min);
  v("x_max", c.x_max);
  v("y_min", c.y_min);
  v("y_max", c.y_max);
  v("z_min", c.z_min);
  v("z_max", c.z_max);
  v("ground_z", c.ground_z);
  v("min_objects", c.min_objects);
  v("max_objects", c.max_objects);
  v("min_range", c.min_range);
  v("dims_jitter", c.dims_jitter);
  v("decay_distance", c.decay_distance);
  v("template_points", c.template_points);
  v("template_seed", c.template_seed);
  v("occlusion_prob", c.occlusion_prob);
  v("occlusion_keep_min", c.occlusion_keep_min);
  v("ground_density", c.ground_density);
  v("poles_min", c.poles_min);
  v("poles_max", c.poles_max);
  v("pole_points", c.pole_points);
  v("noise_sigma", c.noise_sigma);
  v("max_attempts", c.max_attempts);
}

template <class V, class C>
void visit_rpn(V& v, C& c) {
  v("cell", c.cell);
  v("hidden", c.hidden);
  v("prior", c.prior);
  v("pre_nms_top", c.pre_nms_top);
  v("train_nms_threshold", c.train_nms_threshold);
  v("train_keep", c.train_keep);
  const char* names[] = {"car", "pedestrian", "cyclist"};
  v.section("anchor", [&](auto& a) {
    for (std::size_t i = 0; i < 3; ++i) {
      a.section(names[i], [&](auto& t) {
        t("pos", c.anchor[i].pos);
        t("neg", c.anchor[i].neg);
      });
    }
  });
  v.section("focal", [&](auto& f) {
    f("alpha", c.focal.alpha);
    f("gamma", c.focal.gamma);
  });
}

template <class V, class C>
void visit_refine(V& v, C& c) {
  v("pool_margin", c.pool_margin);
  v("max_points", c.max_points);
  v("encoder", c.encoder);
  v("head_hidden", c.head_hidden);
  v("feature_dim", c.feature_dim);
  v("proj_hidden", c.proj_hidden);
  v("proj_dim", c.proj_dim);
  v("tau", c.tau);
  v("mu", c.mu);
  v("fg_threshold", c.fg_threshold);
  v("bg_threshold", c.bg_threshold);
  v("sample_size", c.sample_size);
  v("positive_iou", c.positive_iou);
  v("jitter_gt", c.jitter_gt);
  v("jitter_per_gt", c.jitter_per_gt);
  v("jitter_xyz", c.jitter_xyz);
  v("jitter_theta", c.jitter_theta);
}

template <class V, class C>
void visit_train(V& v, C& c) {
  v("epochs", c.epochs);
  v("scenes", c.scenes);
  v("scene_seed", c.scene_seed);
  v("lr", c.lr);
  v.section("weights", [&](auto& w) {
    w("conf", c.weights.conf);
    w("reg", c.weights.reg);
    w("temp", c.weights.temp);
    w("contra", c.weights.contra);
  });
  v.section("extractor", [&](auto& e) {
    e("centers", c.extractor.centers);
    e("radius1", c.extractor.radius1);
    e("radius2", c.extractor.radius2);
    e("group1", c.extractor.group1);
    e("group2", c.extractor.group2);
    e("local_hidden", c.extractor.local_hidden);
    e("local_dim", c.extractor.local_dim);
    e("fc_hidden", c.extractor.fc_hidden);
    e("out_dim", c.extractor.out_dim);
  });
  v("extractor_seed", c.extractor_seed);
}

template <class V, class C>
void visit_infer(V& v, C& c) {
  v("nms_threshold", c.nms_threshold);
  v("keep", c.keep);
  v("final_nms_threshold", c.final_nms_threshold);
  v("score_threshold", c.score_threshold);
}

template <class V, class C>
void visit_ablation(V& v, C& c) {
  v("use_tafe", c.use_tafe);
  v("use_pscl", c.use_pscl);
  v("test_scenes", c.test_scenes);
  v("test_seed", c.test_seed);
  v("runs", c.runs);
  v("mode", c.mode);
}

template <class V, class C>
void visit_all(V& v, C& c) {
  v.section("scene", [&](auto& s) { visit_scene(s, c.scene); });
  v.section("rpn", [&](auto& s) { visit_rpn(s, c.rpn); });
  v.section("refine", [&](auto& s) { visit_refine(s, c.refine); });
  v.section("train", [&](auto& s) { visit_train(s, c.train); });
  v.section("infer", [&](auto& s) { visit_infer(s, c.infer); });
  v.section("ablation", [&](auto& s) { visit_ablation(s, c.ablation); });
}

}  // namespace

DetectorConfig ExperimentConfig::detector() const {
  DetectorConfig d;
  d.grid = GridSpec::from_scene(scene, rpn.cell);
  d.rpn = rpn;
  d.refine = refine;
  return d;
}

void ExperimentConfig::validate() const {
  scene.validate();
  detector().validate();
  train.validate();
  infer.validate();
  if (train.extractor.out_dim != refine.feature_dim) {
    throw std::invalid_argument("config: train.extractor.out_dim must equal refine.feature_dim");
  }
  if (ablation.runs == 0) throw std::invalid_argument("config: ablation.runs must be positive");
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  Reader root(j, "config");
  visit_all(root, cfg);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const ExperimentConfig& cfg) {
  json j;
  Writer w(j);
  visit_all(w, cfg);
  return j.dump(2) + "\n";
}

}  // namespace ifg
