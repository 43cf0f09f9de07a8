// Copyright 2026 The kfac-bench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "kfac/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kfac {

std::string_view to_string(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::kfac_bd: return "kfac_bd";
    case OptimizerKind::kfac_btd: return "kfac_btd";
    case OptimizerKind::sgd: return "sgd";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

long parse_long(const std::string& key, const std::string& v) {
  long x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return x;
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected on or off, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"problem", [](auto& c, auto&, auto& v) { c.problem = v; }},
      {"optimizer",
       [](auto& c, auto& k, auto& v) {
         if (v == "kfac_bd") c.optimizer = OptimizerKind::kfac_bd;
         else if (v == "kfac_btd") c.optimizer = OptimizerKind::kfac_btd;
         else if (v == "sgd") c.optimizer = OptimizerKind::sgd;
         else throw ConfigError(k + ": expected kfac_bd, kfac_btd or sgd, got '" + v + "'");
       }},
      {"momentum", [](auto& c, auto& k, auto& v) { c.momentum = parse_switch(k, v); }},
      {"eta", [](auto& c, auto& k, auto& v) { c.eta = parse_double(k, v); }},
      {"lambda0", [](auto& c, auto& k, auto& v) { c.lambda0 = parse_double(k, v); }},
      {"T1", [](auto& c, auto& k, auto& v) { c.T1 = static_cast<int>(parse_long(k, v)); }},
      {"T2", [](auto& c, auto& k, auto& v) { c.T2 = static_cast<int>(parse_long(k, v)); }},
      {"T3", [](auto& c, auto& k, auto& v) { c.T3 = static_cast<int>(parse_long(k, v)); }},
      {"tau1", [](auto& c, auto& k, auto& v) { c.tau1 = parse_double(k, v); }},
      {"tau2", [](auto& c, auto& k, auto& v) { c.tau2 = parse_double(k, v); }},
      {"batch_schedule",
       [](auto& c, auto& k, auto& v) {
         try {
           c.batch_schedule = BatchSchedule::parse(v);
         } catch (const Error& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"max_iters", [](auto& c, auto& k, auto& v) { c.max_iters = parse_long(k, v); }},
      {"max_seconds", [](auto& c, auto& k, auto& v) { c.max_seconds = parse_double(k, v); }},
      {"seed",
       [](auto& c, auto& k, auto& v) {
         const long s = parse_long(k, v);
         if (s < 0) throw ConfigError(k + ": must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"init_scale", [](auto& c, auto& k, auto& v) { c.init_scale = parse_double(k, v); }},
      {"sparse_k", [](auto& c, auto& k, auto& v) { c.sparse_k = static_cast<int>(parse_long(k, v)); }},
      {"dataset_size", [](auto& c, auto& k, auto& v) { c.dataset_size = parse_long(k, v); }},
      {"learn_rate",
       [](auto& c, auto& k, auto& v) { c.learn_rate = v == "auto" ? 0.0 : parse_double(k, v); }},
      {"lr_select_fraction",
       [](auto& c, auto& k, auto& v) { c.lr_select_fraction = parse_double(k, v); }},
      {"mu_max", [](auto& c, auto& k, auto& v) { c.mu_max = parse_double(k, v); }},
      {"xi", [](auto& c, auto& k, auto& v) { c.xi = parse_double(k, v); }},
      {"lowrank", [](auto& c, auto& k, auto& v) { c.lowrank = parse_switch(k, v); }},
      {"hidden",
       [](auto& c, auto& k, auto& v) {
         c.hidden.clear();
         std::stringstream ss(v);
         for (std::string w; std::getline(ss, w, ',');) {
           const long x = parse_long(k, trim(w));
           if (x < 1) throw ConfigError(k + ": widths must be >= 1");
           c.hidden.push_back(static_cast<int>(x));
         }
       }},
      {"eval_every", [](auto& c, auto& k, auto& v) { c.eval_every = parse_long(k, v); }},
      {"checkpoint_every",
       [](auto& c, auto& k, auto& v) { c.checkpoint_every = parse_long(k, v); }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (problem.empty()) throw ConfigError("problem: must not be empty");
  if (max_iters < 0) throw ConfigError("max_iters: must be >= 0");
  if (max_seconds < 0) throw ConfigError("max_seconds: must be >= 0");
  if (dataset_size < 0) throw ConfigError("dataset_size: must be >= 0");
  if (!(init_scale > 0)) throw ConfigError("init_scale: must be > 0");
  if (sparse_k < 1) throw ConfigError("sparse_k: must be >= 1");
  if (learn_rate < 0) throw ConfigError("learn_rate: must be > 0 or auto");
  if (!(lr_select_fraction > 0 && lr_select_fraction <= 1)) {
    throw ConfigError("lr_select_fraction: must lie in (0, 1]");
  }
  if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every: must be >= 1");
  try {
    if (optimizer == OptimizerKind::sgd) {
      SgdConfig s = sgd_config();
      if (s.learn_rate == 0.0) s.learn_rate = 0.01;
      s.validate();
    } else {
      optimizer_config().validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

OptimizerConfig ExperimentConfig::optimizer_config() const {
  OptimizerConfig c;
  c.mode = optimizer == OptimizerKind::kfac_bd ? Approx::block_diag : Approx::block_tridiag;
  c.eta = eta;
  c.lambda0 = lambda0;
  c.T1 = T1;
  c.T2 = T2;
  c.T3 = T3;
  c.omega1 = std::pow(19.0 / 20.0, T1);
  c.omega2 = std::pow(std::sqrt(19.0 / 20.0), T2);
  c.tau1 = tau1;
  c.tau2 = tau2;
  c.momentum = momentum;
  c.schedule = batch_schedule;
  c.xi = xi;
  c.seed = seed;
  c.lowrank = lowrank;
  c.track_train_error = false;
  return c;
}

SgdConfig ExperimentConfig::sgd_config() const {
  SgdConfig c;
  c.learn_rate = learn_rate;
  c.mu_max = mu_max;
  c.eta = eta;
  c.schedule = batch_schedule;
  c.xi = xi;
  c.seed = seed;
  c.track_train_error = false;
  return c;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  auto hidden_text = [this] {
    std::string out;
    for (std::size_t i = 0; i < hidden.size(); ++i) out += (i ? "," : "") + std::to_string(hidden[i]);
    return out.empty() ? std::string("default") : out;
  };
  auto sw = [](bool b) { return std::string(b ? "on" : "off"); };
  return {
      {"problem", problem},
      {"optimizer", std::string(to_string(optimizer))},
      {"momentum", sw(momentum)},
      {"eta", fmt(eta)},
      {"lambda0", fmt(lambda0)},
      {"T1", std::to_string(T1)},
      {"T2", std::to_string(T2)},
      {"T3", std::to_string(T3)},
      {"tau1", fmt(tau1)},
      {"tau2", fmt(tau2)},
      {"batch_schedule", batch_schedule.to_string()},
      {"max_iters", std::to_string(max_iters)},
      {"max_seconds", fmt(max_seconds)},
      {"seed", std::to_string(seed)},
      {"init_scale", fmt(init_scale)},
      {"sparse_k", std::to_string(sparse_k)},
      {"dataset_size", std::to_string(dataset_size)},
      {"learn_rate", learn_rate == 0.0 ? "auto" : fmt(learn_rate)},
      {"lr_select_fraction", fmt(lr_select_fraction)},
      {"mu_max", fmt(mu_max)},
      {"xi", fmt(xi)},
      {"lowrank", sw(lowrank)},
      {"hidden", hidden_text()},
      {"eval_every", std::to_string(eval_every)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
  };
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value");
    try {
      it->second(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace kfac
