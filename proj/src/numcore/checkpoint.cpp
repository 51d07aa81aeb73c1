#include "qtrack/numcore/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace qtrack::numcore {

using nlohmann::json;

std::string checkpoint_to_json(const ParamStore& store) {
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  json params = json::object();
  for (const auto& [name, t] : store.all()) {
    json entry;
    entry["shape"] = {t.rows(), t.cols()};
    entry["values"] = t.values();
    entry["learnable"] = store.learnable().at(name);
    params[name] = std::move(entry);
  }
  doc["params"] = std::move(params);
  return doc.dump(1);
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << checkpoint_to_json(store) << "\n";
}

void checkpoint_from_json(ParamStore& store, const std::string& json_text) {
  json doc = json::parse(json_text);
  if (!doc.contains("format_version") ||
      doc["format_version"].get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error(
        "checkpoint: format_version mismatch (expected " +
        std::to_string(kCheckpointFormatVersion) + ")");
  const json& params = doc.at("params");
  for (const auto& [name, t] : store.all()) {
    if (!params.contains(name))
      throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    const json& entry = params.at(name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "'");
    auto values = entry.at("values").get<std::vector<double>>();
    if (values.size() != t.size())
      throw std::runtime_error("checkpoint: value count mismatch for '" +
                               name + "'");
    Tensor dst = t;
    dst.values() = std::move(values);
  }
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  checkpoint_from_json(store, text);
}

}  // namespace qtrack::numcore
