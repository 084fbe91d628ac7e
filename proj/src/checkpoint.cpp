#include "morphogen/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "morphogen/error.hpp"
#include "morphogen/text.hpp"

namespace morphogen {

using json = nlohmann::json;
using nn::Parameter;

namespace {

json tensors_to_json(const std::vector<Parameter*>& params) {
  json out = json::array();
  for (const Parameter* p : params) {
    out.push_back({{"name", p->name}, {"shape", p->value.shape()},
                   {"data", std::vector<double>(p->value.data().begin(), p->value.data().end())}});
  }
  return out;
}

void tensors_from_json(const json& tensors, const std::vector<Parameter*>& params, const std::string& where) {
  if (!tensors.is_array()) throw ModelError(where + ": 'tensors' must be an array");
  std::map<std::string, const json*> by_name;
  for (const json& t : tensors) {
    if (!t.is_object() || !t.contains("name")) throw ModelError(where + ": tensor without a name");
    by_name[t.at("name").get<std::string>()] = &t;
  }
  if (by_name.size() != params.size()) {
    throw ModelError(where + ": expected " + std::to_string(params.size()) + " tensors, found " +
                     std::to_string(by_name.size()));
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ModelError(where + ": missing tensor " + p->name);
    const json& t = *it->second;
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw ModelError(where + ": tensor " + p->name + " has shape " + nn::Tensor(shape).shape_string() +
                       ", expected " + p->value.shape_string());
    }
    const json& data = t.at("data");
    if (!data.is_array() || data.size() != p->value.size()) {
      throw ModelError(where + ": tensor " + p->name + " holds " + std::to_string(data.size()) +
                       " values, expected " + std::to_string(p->value.size()));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i].is_number()) throw ModelError(where + ": tensor " + p->name + " contains a non-number");
      p->value[i] = data[i].get<double>();
      if (!std::isfinite(p->value[i])) throw ModelError(where + ": tensor " + p->name + " is not finite");
    }
  }
}

}  // namespace

void write_model_set(std::ostream& out, std::span<const ModelEntry> entries) {
  if (entries.empty()) throw ModelError("checkpoint needs at least one model");
  const ModelParams& first = entries[0].model;
  json doc;
  doc["format"] = "morphogen-checkpoint";
  doc["format_version"] = kCheckpointFormatVersion;
  doc["variant"] = std::string(to_string(first.config.variant));
  json vocab = json::array();
  for (char32_t c : first.vocab.chars()) vocab.push_back(text::encode_utf8(c));
  doc["vocab"] = vocab;
  doc["config"] = {{"hidden", first.config.hidden}, {"embed_dim", first.config.embed_dim}};

  std::vector<const EncoderParams*> encoders;
  json models = json::array();
  for (const ModelEntry& entry : entries) {
    const ModelParams& m = entry.model;
    if (!(m.vocab == first.vocab) || !(m.config == first.config)) {
      throw ModelError("all models in one checkpoint must share vocabulary and configuration");
    }
    auto it = std::find(encoders.begin(), encoders.end(), m.encoder.get());
    const auto encoder_index = static_cast<std::size_t>(it - encoders.begin());
    if (it == encoders.end()) encoders.push_back(m.encoder.get());
    json model = {{"tag", entry.tag},
                  {"encoder", encoder_index},
                  {"tensors", tensors_to_json(const_cast<ModelParams&>(m).decoder.parameters())}};
    if (entry.lambda) model["lambda"] = *entry.lambda;
    models.push_back(std::move(model));
  }
  json enc_json = json::array();
  for (const EncoderParams* e : encoders) {
    enc_json.push_back({{"tensors", tensors_to_json(const_cast<EncoderParams*>(e)->parameters())}});
  }
  doc["encoders"] = std::move(enc_json);
  doc["models"] = std::move(models);
  out << doc.dump(1) << '\n';
}

std::vector<ModelEntry> read_model_set(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ModelError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "morphogen-checkpoint") {
      throw ModelError("not a morphogen checkpoint");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ModelError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
    }
    std::u32string chars;
    for (const json& c : doc.at("vocab")) {
      const std::u32string decoded = text::decode_utf8(c.get<std::string>());
      if (decoded.size() != 1) throw ModelError("vocabulary entries must be single characters");
      chars += decoded;
    }
    const CharVocab vocab(chars);
    if (vocab.chars().size() != chars.size()) throw ModelError("vocabulary contains duplicates");
    ModelConfig config;
    config.hidden = doc.at("config").at("hidden").get<std::size_t>();
    config.embed_dim = doc.at("config").at("embed_dim").get<std::size_t>();
    config.variant = parse_variant(doc.at("variant").get<std::string>());

    std::vector<std::shared_ptr<EncoderParams>> encoders;
    const json& enc_json = doc.at("encoders");
    for (std::size_t i = 0; i < enc_json.size(); ++i) {
      auto encoder = ModelParams::create(vocab, config, 0).encoder;
      tensors_from_json(enc_json[i].at("tensors"), encoder->parameters(), "encoder " + std::to_string(i));
      encoders.push_back(std::move(encoder));
    }

    std::vector<ModelEntry> entries;
    for (const json& m : doc.at("models")) {
      ModelEntry entry;
      entry.tag = m.at("tag").get<std::string>();
      const auto encoder_index = m.at("encoder").get<std::size_t>();
      if (encoder_index >= encoders.size()) throw ModelError("model refers to a missing encoder");
      entry.model = ModelParams::with_encoder(encoders[encoder_index], vocab, config, 0);
      tensors_from_json(m.at("tensors"), entry.model.decoder.parameters(), "model '" + entry.tag + "'");
      if (m.contains("lambda")) entry.lambda = m.at("lambda").get<double>();
      entries.push_back(std::move(entry));
    }
    if (entries.empty()) throw ModelError("checkpoint contains no models");
    return entries;
  } catch (const json::exception& e) {
    throw ModelError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const DataError& e) {
    throw ModelError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_model_set(const std::filesystem::path& path, std::span<const ModelEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_model_set(out, entries);
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<ModelEntry> load_model_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  return read_model_set(in);
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  const ModelEntry entry{"", model, std::nullopt};
  save_model_set(path, std::span<const ModelEntry>(&entry, 1));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  auto entries = load_model_set(path);
  if (entries.size() != 1) throw ModelError("checkpoint holds " + std::to_string(entries.size()) + " models, expected 1");
  return std::move(entries[0].model);
}

}  // namespace morphogen
