#include "pbt/events.hpp"

#include <array>
#include <cmath>
#include <fstream>

namespace pbt {

namespace {

constexpr std::array<std::pair<std::string_view, EventKind>, 5> kKinds{{
    {"step-batch", EventKind::step_batch},
    {"eval", EventKind::eval},
    {"exploit", EventKind::exploit},
    {"explore", EventKind::explore},
    {"fail", EventKind::fail},
}};

}  // namespace

std::string_view to_string(EventKind k) {
  for (const auto& [name, kind] : kKinds) {
    if (kind == k) return name;
  }
  return "?";
}

EventKind parse_event_kind(std::string_view s) {
  for (const auto& [name, kind] : kKinds) {
    if (name == s) return kind;
  }
  throw Error("unknown event kind '" + std::string(s) + "'");
}

Json to_json(const HyperparamVector& h) {
  Json j = Json::object();
  for (const auto& [name, value] : h) {
    if (const double* d = std::get_if<double>(&value)) {
      j[name] = *d;
    } else {
      j[name] = std::get<std::string>(value);
    }
  }
  return j;
}

HyperparamVector hyperparams_from_json(const Json& j) {
  if (!j.is_object()) throw Error("hyperparameters must be a JSON object");
  HyperparamVector h;
  for (const auto& [name, value] : j.items()) {
    if (value.is_number()) {
      h.emplace(name, value.get<double>());
    } else if (value.is_string()) {
      h.emplace(name, value.get<std::string>());
    } else {
      throw Error("hyperparameter '" + name + "' must be a number or string");
    }
  }
  return h;
}

Json score_to_json(double p) { return std::isfinite(p) ? Json(p) : Json(nullptr); }

double score_from_json(const Json& j) { return j.is_null() ? kUnevaluated : j.get<double>(); }

Json to_json(const LineageEvent& e) {
  Json j;
  j["event"] = e.event_counter;
  j["member"] = e.member_id;
  j["kind"] = to_string(e.kind);
  if (e.parent_member_id) j["parent"] = *e.parent_member_id;
  if (e.mask) j["mask"] = to_string(*e.mask);
  j["ancestor"] = e.ancestor_id;
  if (e.checkpoint) j["checkpoint"] = *e.checkpoint;
  j["t"] = e.t_at_event;
  j["p"] = score_to_json(e.p_at_event);
  j["h_before"] = to_json(e.h_before);
  j["h_after"] = to_json(e.h_after);
  return j;
}

LineageEvent event_from_json(const Json& j) {
  LineageEvent e;
  try {
    e.event_counter = j.at("event").get<std::uint64_t>();
    e.member_id = j.at("member").get<MemberId>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    if (j.contains("parent")) e.parent_member_id = j["parent"].get<MemberId>();
    if (j.contains("mask")) e.mask = parse_exploit_mask(j["mask"].get<std::string>());
    e.ancestor_id = j.at("ancestor").get<MemberId>();
    if (j.contains("checkpoint")) e.checkpoint = j["checkpoint"].get<std::uint64_t>();
    e.t_at_event = j.at("t").get<std::int64_t>();
    e.p_at_event = score_from_json(j.at("p"));
    e.h_before = hyperparams_from_json(j.at("h_before"));
    e.h_after = hyperparams_from_json(j.at("h_after"));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("malformed event: ") + ex.what());
  }
  return e;
}

std::string to_json_line(const LineageEvent& e) { return to_json(e).dump(); }

std::vector<LineageEvent> read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log " + path.string());
  std::vector<LineageEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      events.push_back(event_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

void write_events(const std::filesystem::path& path, std::span<const LineageEvent> events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : events) out << to_json_line(e) << '\n';
}

}  // namespace pbt
