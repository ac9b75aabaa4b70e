#pragma once

// Shared population store: per-member latest state, checkpoint registry and
// the event log. This is the only mutable state shared between members.
//
// Writes are linearizable per member id and guarded by a version number;
// cross-member reads are snapshots and may lag in-flight writes.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "pbt/core.hpp"
#include "pbt/events.hpp"

namespace pbt {

struct CheckpointRef {
  MemberId member_id = 0;
  std::uint64_t created_at = 0;
  auto operator<=>(const CheckpointRef&) const = default;
};

struct Checkpoint {
  MemberId member_id = 0;
  std::int64_t t = 0;
  ParamVector theta;
  HyperparamVector h;
  double p = kUnevaluated;
  MemberId ancestor_id = 0;
  std::optional<MemberId> parent_member_id;
  std::uint64_t created_at = 0;
  std::vector<double> window;  // most recent first

  CheckpointRef ref() const { return {member_id, created_at}; }
};

/// Bit-for-bit equality of every field.
bool operator==(const Checkpoint& a, const Checkpoint& b);

/// Text record; reals carry 17 significant digits so they reload exactly.
std::string serialize(const Checkpoint& c);
Checkpoint deserialize_checkpoint(std::string_view text);

struct StoreSnapshot {
  std::vector<MemberState> members;  // indexed by id
  std::uint64_t event_counter = 0;

  const MemberState& at(MemberId id) const { return members.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return members.size(); }
};

struct PublishAck {
  MemberId member_id = 0;
  std::uint64_t version = 0;
};

/// A publish whose version does not exceed the stored one.
class StaleWriteError : public Error {
 public:
  using Error::Error;
};

/// The state `dst` takes after copying from `src` under `mask`. t is kept,
/// steps_since_event resets and the version advances. Copying weights also
/// takes the source's ancestor, eval window and p.
MemberState apply_exploit(const MemberState& dst, const Checkpoint& src, ExploitMask mask);

class PopulationStore {
 public:
  /// `initial` holds one state per member, ids 0..N-1 in order.
  explicit PopulationStore(std::vector<MemberState> initial);
  virtual ~PopulationStore() = default;
  PopulationStore(const PopulationStore&) = delete;
  PopulationStore& operator=(const PopulationStore&) = delete;

  int size() const { return static_cast<int>(members_.size()); }

  /// Throws StaleWriteError unless state.version is above the stored one.
  PublishAck publish(const MemberState& state);
  StoreSnapshot snapshot() const;
  MemberState latest(MemberId id) const;

  CheckpointRef save_checkpoint(const MemberState& state,
                                std::optional<MemberId> parent_member_id = std::nullopt);
  Checkpoint load_checkpoint(CheckpointRef ref) const;
  std::optional<CheckpointRef> latest_checkpoint(MemberId id) const;

  /// Latest checkpoint of `source`, pinned so retention never drops it.
  Checkpoint acquire_source(MemberId source);

  /// Overwrites dst (its stored latest state) from `src` under `mask`,
  /// publishes the result and logs an exploit event.
  MemberState exploit_copy(MemberId dst, const Checkpoint& src, ExploitMask mask);

  /// Publishes dst as failed and logs a fail event.
  void mark_failed(MemberId id);

  /// Assigns the next global event counter and appends to the log.
  std::uint64_t log_event(LineageEvent event);
  std::vector<LineageEvent> events() const;
  std::size_t checkpoint_count() const;

 protected:
  virtual void persist(const Checkpoint& c) = 0;
  virtual Checkpoint fetch(CheckpointRef ref) const = 0;
  virtual void discard(CheckpointRef ref) = 0;
  virtual void on_event(const LineageEvent&) {}

 private:
  void check_id(MemberId id) const;
  std::uint64_t log_event_locked(LineageEvent event);

  mutable std::shared_mutex mutex_;
  std::vector<MemberState> members_;
  std::vector<std::optional<CheckpointRef>> latest_checkpoint_;
  std::set<CheckpointRef> pinned_;
  std::set<CheckpointRef> live_;
  std::vector<LineageEvent> events_;
  std::uint64_t event_counter_ = 0;
  std::uint64_t checkpoint_counter_ = 0;
};

/// In-process backend: checkpoints live in a map.
class MemoryStore final : public PopulationStore {
 public:
  using PopulationStore::PopulationStore;

 protected:
  void persist(const Checkpoint& c) override;
  Checkpoint fetch(CheckpointRef ref) const override;
  void discard(CheckpointRef ref) override;

 private:
  std::map<CheckpointRef, Checkpoint> checkpoints_;
};

/// File backend: <run_dir>/checkpoints/<member>/<created_at>.ckpt, written
/// via temp-then-rename, and the event log streamed to <run_dir>/events.jsonl.
class DirectoryStore final : public PopulationStore {
 public:
  DirectoryStore(std::vector<MemberState> initial, std::filesystem::path run_dir);

  const std::filesystem::path& run_dir() const { return run_dir_; }
  std::filesystem::path checkpoint_path(CheckpointRef ref) const;

 protected:
  void persist(const Checkpoint& c) override;
  Checkpoint fetch(CheckpointRef ref) const override;
  void discard(CheckpointRef ref) override;
  void on_event(const LineageEvent& e) override;

 private:
  std::filesystem::path run_dir_;
  std::ofstream event_log_;
};

Checkpoint read_checkpoint_file(const std::filesystem::path& path);

}  // namespace pbt
