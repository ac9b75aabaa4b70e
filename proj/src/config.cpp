#include "pbt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pbt/engine.hpp"
#include "pbt/events.hpp"
#include "pbt/tasks.hpp"

namespace pbt {

namespace {

// Reads `key` from `object` as T; type errors name the key.
template <typename T>
std::optional<T> read(const Json& object, const char* key, const std::string& context) {
  if (!object.contains(key)) return std::nullopt;
  try {
    return object.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(context + key + ": wrong type (got " + object.at(key).dump() + ")");
  }
}

template <typename T>
void read_into(const Json& object, const char* key, const std::string& context, T& out) {
  if (auto v = read<T>(object, key, context)) out = *v;
}

template <typename Fn>
auto with_key(const std::string& key, Fn fn) {
  try {
    return fn();
  } catch (const Error& ex) {
    throw Error(key + ": " + ex.what());
  }
}

HyperValue hyper_value_from_json(const Json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(key + ": expected a number or string");
}

Json hyper_value_to_json(const HyperValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

}  // namespace

Json to_json(const HyperparamSpec& spec) {
  Json prior{{"kind", std::string(to_string(spec.prior.kind))}};
  if (spec.prior.kind == PriorKind::categorical) {
    Json choices = Json::array();
    for (const auto& c : spec.prior.choices) choices.push_back(hyper_value_to_json(c));
    prior["choices"] = choices;
  } else {
    prior["lo"] = spec.prior.lo;
    prior["hi"] = spec.prior.hi;
  }
  return Json{{"name", spec.name},
              {"prior", prior},
              {"factors", {spec.perturb_factors.up, spec.perturb_factors.down}},
              {"resample_prob", spec.resample_prob},
              {"clamp_to_prior", spec.clamp_to_prior},
              {"integer", spec.integer}};
}

HyperparamSpec hyperparam_spec_from_json(const Json& j, const std::string& context) {
  reject_unknown_keys(j, {"name", "prior", "factors", "resample_prob", "clamp_to_prior", "integer"},
                      context);
  HyperparamSpec spec;
  const auto name = read<std::string>(j, "name", context + ".");
  if (!name) throw Error(context + ".name: required");
  spec.name = *name;
  const std::string here = context + "[" + spec.name + "].";
  if (!j.contains("prior")) throw Error(here + "prior: required");
  const Json& prior = j.at("prior");
  reject_unknown_keys(prior, {"kind", "lo", "hi", "choices"}, here + "prior");
  const auto kind = read<std::string>(prior, "kind", here + "prior.");
  if (!kind) throw Error(here + "prior.kind: required");
  spec.prior.kind = with_key(here + "prior.kind", [&] { return parse_prior_kind(*kind); });
  if (spec.prior.kind == PriorKind::categorical) {
    if (!prior.contains("choices") || !prior.at("choices").is_array()) {
      throw Error(here + "prior.choices: required list");
    }
    for (const auto& c : prior.at("choices")) {
      spec.prior.choices.push_back(hyper_value_from_json(c, here + "prior.choices"));
    }
    spec.prior.lo = spec.prior.hi = 0.0;
  } else {
    const auto lo = read<double>(prior, "lo", here + "prior.");
    const auto hi = read<double>(prior, "hi", here + "prior.");
    if (!lo || !hi) throw Error(here + "prior: 'lo' and 'hi' are required");
    spec.prior.lo = *lo;
    spec.prior.hi = *hi;
  }
  if (auto f = read<std::vector<double>>(j, "factors", here)) {
    if (f->size() != 2) throw Error(here + "factors: expected [up, down]");
    spec.perturb_factors = {(*f)[0], (*f)[1]};
  }
  read_into(j, "resample_prob", here, spec.resample_prob);
  read_into(j, "clamp_to_prior", here, spec.clamp_to_prior);
  read_into(j, "integer", here, spec.integer);
  with_key(context + "[" + spec.name + "]", [&] { spec.validate(); });
  return spec;
}

ConfigFile parse_config(const Json& doc) {
  const std::string top;
  reject_unknown_keys(doc,
                      {"task", "population_size", "total_steps", "ready_interval", "eval_every",
                       "window", "mode", "seed", "exploit", "exploit_mask", "explore",
                       "partial_sync_quantum", "hyperparams", "initial_h", "initial_grid",
                       "output_dir", "suite"},
                      "config");
  ConfigFile out;
  ExperimentConfig& c = out.experiment;

  if (!doc.contains("task")) throw Error("task: required");
  Json task_json = doc.at("task");
  if (task_json.is_string()) task_json = Json{{"name", task_json.get<std::string>()}};
  const auto task = with_key("task", [&] { return make_task(task_json); });
  out.task = task->constants();

  const auto n = read<int>(doc, "population_size", top);
  if (!n) throw Error("population_size: required");
  c.population_size = *n;
  const auto steps = read<std::int64_t>(doc, "total_steps", top);
  if (!steps) throw Error("total_steps: required");
  c.total_steps = *steps;
  read_into(doc, "ready_interval", top, c.ready_interval);
  read_into(doc, "eval_every", top, c.eval_every);
  read_into(doc, "window", top, c.window_capacity);
  read_into(doc, "seed", top, c.seed);
  read_into(doc, "partial_sync_quantum", top, c.partial_sync_quantum);
  if (auto mode = read<std::string>(doc, "mode", top)) {
    c.mode = with_key("mode", [&] { return parse_execution_mode(*mode); });
  }
  if (auto mask = read<std::string>(doc, "exploit_mask", top)) {
    c.exploit_mask = with_key("exploit_mask", [&] { return parse_exploit_mask(*mask); });
  }

  if (doc.contains("exploit")) {
    const Json& e = doc.at("exploit");
    reject_unknown_keys(e, {"kind", "fraction", "alpha"}, "exploit");
    if (auto kind = read<std::string>(e, "kind", "exploit.")) {
      c.exploit.kind = with_key("exploit.kind", [&] { return parse_exploit_kind(*kind); });
    }
    read_into(e, "fraction", "exploit.", c.exploit.truncation_fraction);
    read_into(e, "alpha", "exploit.", c.exploit.alpha);
  }
  if (!(c.exploit.truncation_fraction > 0.0 && c.exploit.truncation_fraction <= 0.5)) {
    throw Error("exploit.fraction: must lie in (0, 0.5], got " +
                format_double(c.exploit.truncation_fraction));
  }
  if (!(c.exploit.alpha > 0.0 && c.exploit.alpha < 1.0)) {
    throw Error("exploit.alpha: must lie in (0, 1), got " + format_double(c.exploit.alpha));
  }

  if (doc.contains("explore")) {
    const Json& e = doc.at("explore");
    reject_unknown_keys(e, {"kind", "factors", "sigma"}, "explore");
    if (auto kind = read<std::string>(e, "kind", "explore.")) {
      c.explore.kind = with_key("explore.kind", [&] { return parse_explore_kind(*kind); });
    }
    if (auto f = read<std::vector<double>>(e, "factors", "explore.")) {
      if (f->size() != 2) throw Error("explore.factors: expected [up, down]");
      c.explore.factors = {(*f)[0], (*f)[1]};
    }
    read_into(e, "sigma", "explore.", c.explore.sigma);
  }

  if (doc.contains("hyperparams")) {
    const Json& list = doc.at("hyperparams");
    if (!list.is_array()) throw Error("hyperparams: expected a list");
    std::set<std::string> names;
    for (const auto& item : list) {
      Json entry = item;
      if (!entry.contains("factors")) {
        entry["factors"] = {c.explore.factors.up, c.explore.factors.down};
      }
      auto spec = hyperparam_spec_from_json(entry, "hyperparams");
      if (!names.insert(spec.name).second) {
        throw Error("hyperparams: duplicate hyperparameter '" + spec.name + "'");
      }
      c.hyperparams.push_back(std::move(spec));
    }
    for (const auto& needed : task->hyperparam_specs()) {
      if (!names.contains(needed.name)) {
        throw Error("hyperparams: task '" + task->name() + "' needs '" + needed.name + "'");
      }
    }
  } else {
    c.hyperparams = resolve_hyperparams(c, *task);
  }

  if (doc.contains("initial_h") && doc.contains("initial_grid")) {
    throw Error("initial_grid: cannot be combined with initial_h");
  }
  if (doc.contains("initial_h")) {
    const Json& list = doc.at("initial_h");
    if (!list.is_array()) throw Error("initial_h: expected a list of objects");
    for (const auto& item : list) {
      if (!item.is_object()) throw Error("initial_h: expected a list of objects");
      HyperparamVector h;
      for (const auto& [name, value] : item.items()) {
        h.insert_or_assign(name, hyper_value_from_json(value, "initial_h." + name));
      }
      c.initial_h.push_back(std::move(h));
    }
  }
  if (doc.contains("initial_grid")) {
    const Json& grid = doc.at("initial_grid");
    if (!grid.is_object()) throw Error("initial_grid: expected {name: [values]}");
    std::vector<std::pair<std::string, std::vector<HyperValue>>> axes;
    for (const auto& [name, values] : grid.items()) {
      if (!values.is_array()) throw Error("initial_grid." + name + ": expected a list");
      std::vector<HyperValue> vs;
      for (const auto& v : values) vs.push_back(hyper_value_from_json(v, "initial_grid." + name));
      axes.emplace_back(name, std::move(vs));
    }
    c.initial_h = with_key("initial_grid", [&] { return grid_product(axes); });
  }
  for (const auto& h : c.initial_h) {
    with_key("initial_h", [&] { validate_hyperparams(h, c.hyperparams); });
  }

  if (auto dir = read<std::string>(doc, "output_dir", top)) out.output_dir = *dir;

  for (std::uint64_t s = 0; s < 20; ++s) out.suite.seeds.push_back(s);
  out.suite.population_sizes = kDefaultSweepSizes;
  if (doc.contains("suite")) {
    const Json& s = doc.at("suite");
    reject_unknown_keys(s, {"seeds", "population_sizes"}, "suite");
    read_into(s, "seeds", "suite.", out.suite.seeds);
    read_into(s, "population_sizes", "suite.", out.suite.population_sizes);
    if (out.suite.seeds.empty()) throw Error("suite.seeds: must not be empty");
    for (int size : out.suite.population_sizes) {
      if (size < 2) throw Error("suite.population_sizes: sizes must be >= 2");
    }
  }

  try {
    c.validate();
  } catch (const Error& ex) {
    throw Error(std::string("config: ") + ex.what());
  }
  return out;
}

ConfigFile parse_config_text(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(std::string("config: ") + ex.what());
  }
  return parse_config(doc);
}

ConfigFile parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const Error& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

Json to_json(const ConfigFile& config) {
  const ExperimentConfig& c = config.experiment;
  Json j;
  j["task"] = config.task;
  j["population_size"] = c.population_size;
  j["total_steps"] = c.total_steps;
  j["ready_interval"] = c.ready_interval;
  j["eval_every"] = c.eval_every;
  j["window"] = c.window_capacity;
  j["mode"] = std::string(to_string(c.mode));
  j["seed"] = c.seed;
  j["exploit"] = {{"kind", std::string(to_string(c.exploit.kind))},
                  {"fraction", c.exploit.truncation_fraction},
                  {"alpha", c.exploit.alpha}};
  j["exploit_mask"] = std::string(to_string(c.exploit_mask));
  j["explore"] = {{"kind", std::string(to_string(c.explore.kind))},
                  {"factors", {c.explore.factors.up, c.explore.factors.down}},
                  {"sigma", c.explore.sigma}};
  j["partial_sync_quantum"] = c.partial_sync_quantum;
  Json specs = Json::array();
  for (const auto& spec : c.hyperparams) specs.push_back(to_json(spec));
  j["hyperparams"] = specs;
  if (!c.initial_h.empty()) {
    Json list = Json::array();
    for (const auto& h : c.initial_h) {
      Json entry = Json::object();
      for (const auto& [name, value] : h) entry[name] = hyper_value_to_json(value);
      list.push_back(entry);
    }
    j["initial_h"] = list;
  }
  if (config.output_dir) j["output_dir"] = config.output_dir->string();
  j["suite"] = {{"seeds", config.suite.seeds}, {"population_sizes", config.suite.population_sizes}};
  return j;
}

}  // namespace pbt
