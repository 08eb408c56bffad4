#include "lfd/model_io.hpp"

#include "lfd/error.hpp"

namespace lfd {

using nlohmann::json;

namespace {

std::string machine_name(MachineKind k) { return k == MachineKind::Regressor ? "svr" : "svc"; }

MachineKind machine_from(const std::string& s) {
  if (s == "svr") return MachineKind::Regressor;
  if (s == "svc") return MachineKind::Classifier;
  raise(ErrorCode::ParseError, "unknown machine kind " + s);
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json kernel_json(const KernelSpec& k) {
  json j = {{"spec", k.to_string()}, {"degree", k.degree}, {"coef0", k.coef0}};
  j["gamma"] = k.gamma ? json(*k.gamma) : json(nullptr);
  return j;
}

KernelSpec kernel_from(const json& j) {
  KernelSpec k = KernelSpec::parse(j.at("spec").get<std::string>());
  k.degree = j.at("degree").get<int>();
  k.coef0 = j.at("coef0").get<double>();
  if (j.at("gamma").is_null()) {
    k.gamma.reset();
  } else {
    k.gamma = j.at("gamma").get<double>();
  }
  return k;
}

json configs_json(const std::vector<DescriptorConfig>& configs) {
  json j = json::array();
  for (const auto& c : configs) j.push_back(c.to_string());
  return j;
}

std::vector<DescriptorConfig> configs_from(const json& j) {
  std::vector<DescriptorConfig> out;
  for (const auto& s : j) out.push_back(DescriptorConfig::parse(s.get<std::string>()));
  return out;
}

json features_json(ModelContainer& c, const std::string& prefix, const LandmarkFeatures& f) {
  json j = {{"landmark", landmark_name(f.landmark)}, {"configs", configs_json(f.configs)},
            {"fingerprint", f.fingerprint()}, {"pca", f.pca.has_value()}};
  if (f.pca) write_pca(c, prefix + "pca.", *f.pca);
  return j;
}

LandmarkFeatures features_from(const ModelContainer& c, const std::string& prefix, const json& j) {
  LandmarkFeatures f{landmark_from_name(j.at("landmark").get<std::string>()), configs_from(j.at("configs")), std::nullopt};
  if (j.at("pca").get<bool>()) f.pca = read_pca(c, prefix + "pca.");
  if (f.fingerprint() != j.at("fingerprint").get<std::uint64_t>()) {
    raise(ErrorCode::ConfigMismatch, "stored feature fingerprint does not match the configuration");
  }
  return f;
}

json cv_json(const std::vector<GridCell>& table, const std::vector<int>& fold_of) {
  return {{"table", grid_table_json(table)}, {"fold_of", fold_of}};
}

std::vector<GridCell> cv_table_from(const json& j) {
  std::vector<GridCell> out;
  for (const auto& r : j.at("table")) {
    GridCell g;
    g.C = r.at("C").get<double>();
    g.epsilon = r.at("epsilon").get<double>();
    g.kernel = KernelSpec::parse(r.at("kernel").get<std::string>());
    g.score = r.at("score").get<double>();
    g.fold_scores = r.at("fold_scores").get<std::vector<double>>();
    out.push_back(g);
  }
  return out;
}

json individual_json(ModelContainer& c, const std::string& prefix, const IndividualModel& m) {
  write_kernel_model(c, prefix + "regressor.", m.regressor);
  return {{"features", features_json(c, prefix + "features.", m.features)},
          {"train_face_ids", m.train_face_ids},
          {"cv", cv_json(m.cv_table, m.fold_of)}};
}

IndividualModel individual_from(const ModelContainer& c, const std::string& prefix, const json& j) {
  IndividualModel m;
  m.features = features_from(c, prefix + "features.", j.at("features"));
  m.regressor = read_kernel_model(c, prefix + "regressor.");
  m.train_face_ids = j.at("train_face_ids").get<std::vector<std::string>>();
  m.cv_table = cv_table_from(j.at("cv"));
  m.fold_of = j.at("cv").at("fold_of").get<std::vector<int>>();
  return m;
}

}  // namespace

json grid_table_json(const std::vector<GridCell>& table) {
  json rows = json::array();
  for (const auto& g : table) {
    rows.push_back({{"C", g.C}, {"epsilon", g.epsilon}, {"kernel", g.kernel.to_string()}, {"score", g.score},
                    {"fold_scores", g.fold_scores}});
  }
  return rows;
}

void write_kernel_model(ModelContainer& c, const std::string& prefix, const KernelModel& m) {
  c.add_section(prefix + "support_vectors", m.support_vectors);
  c.add_section(prefix + "dual_coefs", m.dual_coefs);
  c.add_section(prefix + "bias", Eigen::VectorXd(Eigen::VectorXd::Constant(1, m.bias)));
  const TrainMeta& t = m.meta;
  c.header[prefix + "machine"] = {
      {"kind", machine_name(m.kind)},
      {"kernel", kernel_json(m.kernel)},
      {"standardizer", {{"mean", vec_json(m.standardizer.mean)}, {"scale", vec_json(m.standardizer.scale)}}},
      {"train_meta",
       {{"C", t.C}, {"epsilon", t.epsilon}, {"n_train", t.n_train}, {"cv_score", t.cv_score},
        {"dual_objective", t.dual_objective}, {"kkt_residual", t.kkt_residual}, {"iterations", t.iterations},
        {"converged", t.converged}}}};
}

KernelModel read_kernel_model(const ModelContainer& c, const std::string& prefix) {
  KernelModel m;
  try {
    const json& h = c.header.at(prefix + "machine");
    m.kind = machine_from(h.at("kind").get<std::string>());
    m.kernel = kernel_from(h.at("kernel"));
    m.standardizer.mean = vec_from(h.at("standardizer").at("mean"));
    m.standardizer.scale = vec_from(h.at("standardizer").at("scale"));
    const json& t = h.at("train_meta");
    m.meta.C = t.at("C").get<double>();
    m.meta.epsilon = t.at("epsilon").get<double>();
    m.meta.n_train = t.at("n_train").get<int>();
    m.meta.cv_score = t.at("cv_score").get<double>();
    m.meta.dual_objective = t.at("dual_objective").get<double>();
    m.meta.kkt_residual = t.at("kkt_residual").get<double>();
    m.meta.iterations = t.at("iterations").get<long>();
    m.meta.converged = t.at("converged").get<bool>();
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, "kernel model header " + prefix + ": " + e.what());
  }
  m.support_vectors = c.section(prefix + "support_vectors");
  m.dual_coefs = c.vector_section(prefix + "dual_coefs");
  const Eigen::VectorXd bias = c.vector_section(prefix + "bias");
  if (bias.size() != 1) raise(ErrorCode::ParseError, "bias section must hold one value");
  m.bias = bias(0);
  const Eigen::Index d = m.standardizer.mean.size();
  if (m.standardizer.scale.size() != d || (m.support_vectors.rows() > 0 && m.support_vectors.cols() != d) ||
      m.dual_coefs.size() != m.support_vectors.rows()) {
    raise(ErrorCode::ParseError, "kernel model sections have inconsistent shapes");
  }
  return m;
}

void write_pca(ModelContainer& c, const std::string& prefix, const PcaModel& m) {
  c.add_section(prefix + "mean", m.mean);
  c.add_section(prefix + "components", m.components);
  c.add_section(prefix + "explained_variance", m.explained_variance);
  c.header[prefix + "fingerprint"] = m.fingerprint;
}

PcaModel read_pca(const ModelContainer& c, const std::string& prefix) {
  PcaModel m;
  m.mean = c.vector_section(prefix + "mean");
  m.components = c.section(prefix + "components");
  m.explained_variance = c.vector_section(prefix + "explained_variance");
  if (m.components.cols() != m.mean.size() || m.components.rows() != m.explained_variance.size()) {
    raise(ErrorCode::ParseError, "PCA sections have inconsistent shapes");
  }
  m.update_fingerprint();
  if (!c.header.contains(prefix + "fingerprint") || c.header.at(prefix + "fingerprint").get<std::uint64_t>() != m.fingerprint) {
    raise(ErrorCode::ConfigMismatch, "PCA fingerprint mismatch");
  }
  return m;
}

ModelContainer to_container(const ConfidenceModel& model) {
  ModelContainer c;
  c.header["architecture"] = architecture_name(model);
  if (const auto* m = std::get_if<IndividualModel>(&model)) {
    c.header["model"] = individual_json(c, "", *m);
  } else if (const auto* m = std::get_if<JointModel>(&model)) {
    write_kernel_model(c, "regressor.", m->regressor);
    json feats = json::array();
    for (std::size_t k = 0; k < m->features.size(); ++k) {
      feats.push_back(features_json(c, "features" + std::to_string(k) + ".", m->features[k]));
    }
    c.header["model"] = {{"features", feats},
                         {"fingerprint", m->fingerprint()},
                         {"train_face_ids", m->train_face_ids},
                         {"cv", cv_json(m->cv_table, m->fold_of)}};
  } else {
    const auto& cm = std::get<CascadedModel>(model);
    write_kernel_model(c, "stage2.", cm.stage2);
    json stage1 = json::array();
    for (std::size_t k = 0; k < cm.stage1.size(); ++k) {
      stage1.push_back(individual_json(c, "stage1_" + std::to_string(k) + ".", cm.stage1[k]));
    }
    c.header["model"] = {{"stage1", stage1},
                         {"stage2_face_ids", cm.stage2_face_ids},
                         {"cv", cv_json(cm.cv_table, cm.fold_of)}};
  }
  return c;
}

ConfidenceModel from_container(const ModelContainer& c) {
  try {
    const std::string arch = c.header.at("architecture").get<std::string>();
    const json& j = c.header.at("model");
    if (arch == "individual") return individual_from(c, "", j);
    if (arch == "joint") {
      JointModel m;
      const json& feats = j.at("features");
      for (std::size_t k = 0; k < feats.size(); ++k) {
        m.features.push_back(features_from(c, "features" + std::to_string(k) + ".", feats[k]));
      }
      if (m.fingerprint() != j.at("fingerprint").get<std::uint64_t>()) {
        raise(ErrorCode::ConfigMismatch, "joint feature order fingerprint mismatch");
      }
      m.regressor = read_kernel_model(c, "regressor.");
      m.train_face_ids = j.at("train_face_ids").get<std::vector<std::string>>();
      m.cv_table = cv_table_from(j.at("cv"));
      m.fold_of = j.at("cv").at("fold_of").get<std::vector<int>>();
      return m;
    }
    if (arch == "cascaded") {
      CascadedModel m;
      const json& stage1 = j.at("stage1");
      for (std::size_t k = 0; k < stage1.size(); ++k) {
        m.stage1.push_back(individual_from(c, "stage1_" + std::to_string(k) + ".", stage1[k]));
      }
      m.stage2 = read_kernel_model(c, "stage2.");
      if (m.stage2.input_dim() != static_cast<int>(m.stage1.size())) {
        raise(ErrorCode::ParseError, "stage-2 input dimension differs from the number of stage-1 models");
      }
      m.stage2_face_ids = j.at("stage2_face_ids").get<std::vector<std::string>>();
      m.cv_table = cv_table_from(j.at("cv"));
      m.fold_of = j.at("cv").at("fold_of").get<std::vector<int>>();
      return m;
    }
    raise(ErrorCode::ParseError, "unknown architecture " + arch);
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("model header: ") + e.what());
  }
}

void save_model(const ConfidenceModel& model, const std::filesystem::path& path) { to_container(model).save(path); }

ConfidenceModel load_model(const std::filesystem::path& path) { return from_container(ModelContainer::load(path)); }

void save_gender_model(const GenderModel& model, const std::filesystem::path& path) {
  ModelContainer c;
  c.header["architecture"] = "gender";
  c.header["model"] = {{"per_landmark", configs_json(model.spec.per_landmark)},
                       {"whole_face", model.spec.whole_face.to_string()},
                       {"pca", model.pca.has_value()},
                       {"fingerprint", model.fingerprint()},
                       {"cv", cv_json(model.cv_table, {})}};
  if (model.pca) write_pca(c, "pca.", *model.pca);
  write_kernel_model(c, "classifier.", model.classifier);
  c.save(path);
}

GenderModel load_gender_model(const std::filesystem::path& path) {
  const ModelContainer c = ModelContainer::load(path);
  GenderModel m;
  try {
    if (c.header.at("architecture").get<std::string>() != "gender") raise(ErrorCode::ParseError, "not a gender model");
    const json& j = c.header.at("model");
    m.spec.per_landmark = configs_from(j.at("per_landmark"));
    m.spec.whole_face = DescriptorConfig::parse(j.at("whole_face").get<std::string>());
    if (j.at("pca").get<bool>()) m.pca = read_pca(c, "pca.");
    m.cv_table = cv_table_from(j.at("cv"));
    m.classifier = read_kernel_model(c, "classifier.");
    if (m.fingerprint() != j.at("fingerprint").get<std::uint64_t>()) raise(ErrorCode::ConfigMismatch, "gender feature fingerprint mismatch");
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("gender model header: ") + e.what());
  }
  return m;
}

}  // namespace lfd
