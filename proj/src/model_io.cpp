#include "sfe/model_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace sfe {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v)
{
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j)
{
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_json(const Eigen::MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index n)
{
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw Error("covariance has wrong shape");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::VectorXd row = vector_from(j.at(static_cast<std::size_t>(r)));
    if (row.size() != n)
      throw Error("covariance has wrong shape");
    m.row(r) = row.transpose();
  }
  return m;
}

} // namespace

std::string egmm_to_string(const EgmmModel& model)
{
  json config = {
      {"members_per_k", model.config.members_per_k},
      {"component_counts", model.config.component_counts},
      {"retention_quantile", model.config.retention_quantile},
      {"em_max_iters", model.config.em_max_iters},
      {"em_tol", model.config.em_tol},
      {"seed", model.config.seed},
  };
  json members = json::array();
  for (const auto& gmm : model.members) {
    json components = json::array();
    for (const auto& c : gmm.components)
      components.push_back({{"weight", c.weight}, {"mean", vector_json(c.mean)}, {"covariance", matrix_json(c.covariance)}});
    members.push_back({{"components", std::move(components)}});
  }
  json doc = {
      {"format", kEgmmFormat},
      {"version", kEgmmFormatVersion},
      {"dim", model.dim()},
      {"config", std::move(config)},
      {"trained_members", model.trained_members},
      {"standardization", {{"shift", vector_json(model.standardizer.shift)}, {"scale", vector_json(model.standardizer.scale)}}},
      {"members", std::move(members)},
  };
  return doc.dump(1) + "\n";
}

EgmmModel egmm_from_string(const std::string& text)
{
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != kEgmmFormat)
      throw Error("not an ensemble model file");
    const int version = doc.at("version").get<int>();
    if (version != kEgmmFormatVersion)
      throw Error(fmt::format("unsupported model version {}", version));

    EgmmModel model;
    const auto n = doc.at("dim").get<Eigen::Index>();
    const auto& cfg = doc.at("config");
    model.config.members_per_k = cfg.at("members_per_k").get<int>();
    model.config.component_counts = cfg.at("component_counts").get<std::vector<int>>();
    model.config.retention_quantile = cfg.at("retention_quantile").get<double>();
    model.config.em_max_iters = cfg.at("em_max_iters").get<int>();
    model.config.em_tol = cfg.at("em_tol").get<double>();
    model.config.seed = cfg.at("seed").get<std::uint64_t>();
    model.trained_members = doc.at("trained_members").get<std::size_t>();
    model.standardizer.shift = vector_from(doc.at("standardization").at("shift"));
    model.standardizer.scale = vector_from(doc.at("standardization").at("scale"));
    if (model.standardizer.shift.size() != n || model.standardizer.scale.size() != n)
      throw Error("standardization has wrong dimensionality");
    for (const auto& m : doc.at("members")) {
      GmmModel gmm;
      for (const auto& c : m.at("components")) {
        GaussianComponent<double> comp;
        comp.weight = c.at("weight").get<double>();
        comp.mean = vector_from(c.at("mean"));
        if (comp.mean.size() != n)
          throw Error("component mean has wrong dimensionality");
        comp.covariance = matrix_from(c.at("covariance"), n);
        gmm.components.push_back(std::move(comp));
      }
      if (gmm.components.empty())
        throw Error("member without components");
      model.members.push_back(std::move(gmm));
    }
    if (model.members.empty())
      throw Error("model has no members");
    return model;
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed model file: {}", e.what()));
  }
}

void save_egmm(const EgmmModel& model, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(fmt::format("cannot write {}", path.string()));
  out << egmm_to_string(model);
  if (!out)
    throw Error(fmt::format("write failed: {}", path.string()));
}

EgmmModel load_egmm(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return egmm_from_string(buf.str());
}

} // namespace sfe
