#pragma once

// Lineage events: the exploit/explore/eval history written to events.jsonl,
// from which phylogenies and hyperparameter lineages are rebuilt.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbt/core.hpp"
#include "pbt/json.hpp"

namespace pbt {

enum class EventKind { step_batch, eval, exploit, explore, fail };

std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view s);

struct LineageEvent {
  std::uint64_t event_counter = 0;
  MemberId member_id = 0;
  EventKind kind = EventKind::eval;
  std::optional<MemberId> parent_member_id;  // exploit only
  std::optional<ExploitMask> mask;           // exploit only
  MemberId ancestor_id = 0;                  // after the event
  // eval: the checkpoint saved; exploit: the source checkpoint copied.
  std::optional<std::uint64_t> checkpoint;
  HyperparamVector h_before;
  HyperparamVector h_after;
  double p_at_event = kUnevaluated;
  std::int64_t t_at_event = 0;

  /// Whether this event moved the member onto another member's weights.
  bool copies_weights() const {
    return kind == EventKind::exploit && mask &&
           (*mask == ExploitMask::all || *mask == ExploitMask::weights_only);
  }
  bool operator==(const LineageEvent&) const = default;
};

Json to_json(const HyperparamVector& h);
HyperparamVector hyperparams_from_json(const Json& j);

/// Non-finite doubles become null; null reads back as kUnevaluated.
Json score_to_json(double p);
double score_from_json(const Json& j);

Json to_json(const LineageEvent& e);
LineageEvent event_from_json(const Json& j);

/// One compact JSON object, no trailing newline.
std::string to_json_line(const LineageEvent& e);

std::vector<LineageEvent> read_events(const std::filesystem::path& path);
void write_events(const std::filesystem::path& path, std::span<const LineageEvent> events);

}  // namespace pbt
