#include "gbnet/model_store.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>

#include <json.hpp>

#include "gbnet/error.hpp"

namespace gbnet {

namespace {

using nlohmann::json;

std::string f64_to_hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return std::string(buf);
}

double hex_to_f64(const std::string& s) {
  if (s.size() != 16) throw ParseError("model archive: bad float encoding '" + s + "'");
  std::uint64_t bits = 0;
  for (char c : s) {
    int digit;
    if (c >= '0' && c <= '9') {
      digit = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      digit = c - 'a' + 10;
    } else {
      throw ParseError("model archive: bad float encoding '" + s + "'");
    }
    bits = (bits << 4) | static_cast<std::uint64_t>(digit);
  }
  return std::bit_cast<double>(bits);
}

std::string encode_vec(std::span<const double> v) {
  std::string out;
  out.reserve(v.size() * 17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(' ');
    out += f64_to_hex(v[i]);
  }
  return out;
}

std::vector<double> decode_vec(const std::string& s, std::size_t expected) {
  std::vector<double> out;
  std::size_t at = 0;
  while (at < s.size()) {
    const std::size_t sp = s.find(' ', at);
    const std::size_t end = sp == std::string::npos ? s.size() : sp;
    out.push_back(hex_to_f64(s.substr(at, end - at)));
    at = end + 1;
  }
  if (out.size() != expected) {
    throw ParseError("model archive: tensor has " + std::to_string(out.size()) +
                     " values, expected " + std::to_string(expected));
  }
  return out;
}

std::string task_to_string(const TaskKind& task) {
  switch (task.kind) {
    case TaskKind::Kind::Regression: return "regression";
    case TaskKind::Kind::BinaryClassification: return "classification";
    case TaskKind::Kind::PairwiseRanking: return "ranking";
  }
  throw ConfigError("save_model: unknown task");
}

TaskKind task_from_string(const std::string& s, double sigma0) {
  if (s == "regression") return TaskKind::regression();
  if (s == "classification") return TaskKind::classification();
  if (s == "ranking") return TaskKind::ranking(sigma0);
  throw ParseError("model archive: unknown task '" + s + "'");
}

json learner_to_json(const WeakLearner& learner) {
  json j;
  j["input_dim"] = learner.arch.input_dim;
  j["hidden_dims"] = learner.arch.hidden_dims;
  j["activation"] = learner.arch.activation == Activation::LeakyReLU ? "leaky_relu" : "relu6";
  j["leaky_slope"] = f64_to_hex(learner.arch.leaky_slope);
  j["use_batch_norm"] = learner.arch.use_batch_norm;
  json layers = json::array();
  for (std::size_t l = 0; l < learner.arch.num_layers(); ++l) {
    json layer;
    layer["w"] = encode_vec(learner.weights[l].data());
    layer["b"] = encode_vec(learner.biases[l]);
    if (learner.arch.use_batch_norm) {
      const BatchNormState& s = learner.bn[l];
      layer["bn_gamma"] = encode_vec(s.gamma);
      layer["bn_beta"] = encode_vec(s.beta);
      layer["bn_mean"] = encode_vec(s.running_mean);
      layer["bn_var"] = encode_vec(s.running_var);
      layer["bn_momentum"] = f64_to_hex(s.momentum);
    }
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  j["out_w"] = encode_vec(learner.out_weight);
  j["out_b"] = f64_to_hex(learner.out_bias);
  return j;
}

WeakLearner learner_from_json(const json& j) {
  WeakLearner learner;
  learner.arch.input_dim = j.at("input_dim").get<std::size_t>();
  learner.arch.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "leaky_relu") {
    learner.arch.activation = Activation::LeakyReLU;
  } else if (act == "relu6") {
    learner.arch.activation = Activation::ReLU6;
  } else {
    throw ParseError("model archive: unknown activation '" + act + "'");
  }
  learner.arch.leaky_slope = hex_to_f64(j.at("leaky_slope").get<std::string>());
  learner.arch.use_batch_norm = j.at("use_batch_norm").get<bool>();
  learner.arch.validate();

  const json& layers = j.at("layers");
  if (layers.size() != learner.arch.num_layers()) {
    throw ParseError("model archive: layer count does not match architecture");
  }
  std::size_t fan_in = learner.arch.input_dim;
  for (std::size_t l = 0; l < learner.arch.num_layers(); ++l) {
    const std::size_t dim = learner.arch.hidden_dims[l];
    const json& layer = layers[l];
    learner.weights.emplace_back(dim, fan_in,
                                 decode_vec(layer.at("w").get<std::string>(), dim * fan_in));
    learner.biases.push_back(decode_vec(layer.at("b").get<std::string>(), dim));
    if (learner.arch.use_batch_norm) {
      BatchNormState s;
      s.gamma = decode_vec(layer.at("bn_gamma").get<std::string>(), dim);
      s.beta = decode_vec(layer.at("bn_beta").get<std::string>(), dim);
      s.running_mean = decode_vec(layer.at("bn_mean").get<std::string>(), dim);
      s.running_var = decode_vec(layer.at("bn_var").get<std::string>(), dim);
      s.momentum = hex_to_f64(layer.at("bn_momentum").get<std::string>());
      for (double v : s.running_var) {
        if (v < 0.0) throw ParseError("model archive: negative running variance");
      }
      learner.bn.push_back(std::move(s));
    }
    fan_in = dim;
  }
  learner.out_weight = decode_vec(j.at("out_w").get<std::string>(), fan_in);
  learner.out_bias = hex_to_f64(j.at("out_b").get<std::string>());
  return learner;
}

}  // namespace

void save_model(const Ensemble& model, const std::string& path,
                const std::string& config_fingerprint) {
  json j;
  j["magic"] = kModelMagic;
  j["format_version"] = kModelFormatVersion;
  j["task"] = task_to_string(model.task);
  j["sigma0"] = f64_to_hex(model.task.sigma0);
  j["prior"] = f64_to_hex(model.prior);
  j["feature_dim"] = model.feature_dim;
  j["stacked"] = model.stacked;
  j["alphas"] = encode_vec(model.alphas);
  j["config_fingerprint"] = config_fingerprint;
  json learners = json::array();
  for (const WeakLearner& learner : model.learners) learners.push_back(learner_to_json(learner));
  j["learners"] = std::move(learners);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

Ensemble load_model(const std::string& path, std::string* fingerprint_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("model archive '" + path + "' is not valid JSON: " + e.what());
  }

  try {
    if (!j.contains("magic") || j.at("magic").get<std::string>() != kModelMagic) {
      throw ParseError("'" + path + "' is not a model archive (bad magic)");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("model archive format_version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
    }

    Ensemble model;
    model.task = task_from_string(j.at("task").get<std::string>(),
                                  hex_to_f64(j.at("sigma0").get<std::string>()));
    model.prior = hex_to_f64(j.at("prior").get<std::string>());
    model.feature_dim = j.at("feature_dim").get<std::size_t>();
    model.stacked = j.at("stacked").get<bool>();
    for (const json& lj : j.at("learners")) model.learners.push_back(learner_from_json(lj));
    model.alphas = decode_vec(j.at("alphas").get<std::string>(), model.learners.size());

    // Cross-learner shape consistency with the stacking convention.
    for (std::size_t k = 0; k < model.learners.size(); ++k) {
      const std::size_t expect =
          (k == 0 || !model.stacked)
              ? model.feature_dim
              : model.feature_dim + model.learners[k - 1].arch.penultimate_dim();
      if (model.learners[k].arch.input_dim != expect) {
        throw ParseError("model archive: learner " + std::to_string(k) +
                         " input dim is inconsistent with the ensemble layout");
      }
    }
    if (fingerprint_out != nullptr && j.contains("config_fingerprint")) {
      *fingerprint_out = j.at("config_fingerprint").get<std::string>();
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError("model archive '" + path + "' is malformed: " + e.what());
  }
}

}  // namespace gbnet
