#include "pbt/store.hpp"

#include <bit>
#include <cerrno>
#include <cstdlib>
#include <sstream>

namespace pbt {

namespace {

constexpr std::string_view kMagic = "pbt-checkpoint 1";

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw Error("checkpoint: bad number '" + token + "'");
  return v;
}

void check_token(std::string_view s, std::string_view what) {
  if (s.empty() || s.find_first_of(" \t\n\r:\"") != std::string_view::npos) {
    throw Error("checkpoint: " + std::string(what) + " '" + std::string(s) +
                "' must be non-empty without whitespace, ':' or '\"'");
  }
}

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.member_id != b.member_id || a.t != b.t || a.ancestor_id != b.ancestor_id ||
      a.parent_member_id != b.parent_member_id || a.created_at != b.created_at ||
      !same_bits(a.p, b.p) || a.theta.size() != b.theta.size() ||
      a.window.size() != b.window.size() || a.h.size() != b.h.size()) {
    return false;
  }
  for (Eigen::Index i = 0; i < a.theta.size(); ++i) {
    if (!same_bits(a.theta[i], b.theta[i])) return false;
  }
  for (std::size_t i = 0; i < a.window.size(); ++i) {
    if (!same_bits(a.window[i], b.window[i])) return false;
  }
  for (auto ia = a.h.begin(), ib = b.h.begin(); ia != a.h.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.index() != ib->second.index()) return false;
    if (const double* da = std::get_if<double>(&ia->second)) {
      if (!same_bits(*da, std::get<double>(ib->second))) return false;
    } else if (std::get<std::string>(ia->second) != std::get<std::string>(ib->second)) {
      return false;
    }
  }
  return true;
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "member_id " << c.member_id << '\n';
  out << "created_at " << c.created_at << '\n';
  out << "t " << c.t << '\n';
  out << "p " << format_double(c.p) << '\n';
  out << "ancestor_id " << c.ancestor_id << '\n';
  out << "parent_member_id ";
  if (c.parent_member_id) {
    out << *c.parent_member_id;
  } else {
    out << '-';
  }
  out << '\n';
  out << "h";
  for (const auto& [name, value] : c.h) {
    check_token(name, "hyperparameter name");
    out << ' ' << name << ':';
    if (const double* d = std::get_if<double>(&value)) {
      out << format_double(*d);
    } else {
      const auto& token = std::get<std::string>(value);
      check_token(token, "categorical token");
      out << '"' << token << '"';
    }
  }
  out << '\n';
  out << "window " << c.window.size();
  for (double s : c.window) out << ' ' << format_double(s);
  out << '\n';
  out << "theta " << c.theta.size();
  for (Eigen::Index i = 0; i < c.theta.size(); ++i) out << ' ' << format_double(c.theta[i]);
  out << '\n';
  return out.str();
}

Checkpoint deserialize_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw Error("checkpoint: bad header");

  Checkpoint c;
  auto next = [&](std::string_view key) {
    if (!std::getline(in, line)) throw Error("checkpoint: missing '" + std::string(key) + "'");
    std::istringstream fields(line);
    std::string k;
    fields >> k;
    if (k != key) throw Error("checkpoint: expected '" + std::string(key) + "', got '" + k + "'");
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    return tokens;
  };
  auto single = [&](std::string_view key) {
    auto tokens = next(key);
    if (tokens.size() != 1) throw Error("checkpoint: '" + std::string(key) + "' takes one value");
    return tokens.front();
  };
  auto sized_list = [&](std::string_view key) {
    auto tokens = next(key);
    if (tokens.empty()) throw Error("checkpoint: '" + std::string(key) + "' missing length");
    const auto n = std::stoull(tokens.front());
    if (tokens.size() != n + 1) throw Error("checkpoint: '" + std::string(key) + "' length mismatch");
    std::vector<double> values;
    for (std::size_t i = 1; i < tokens.size(); ++i) values.push_back(parse_double(tokens[i]));
    return values;
  };

  try {
    c.member_id = std::stoi(single("member_id"));
    c.created_at = std::stoull(single("created_at"));
    c.t = std::stoll(single("t"));
    c.p = parse_double(single("p"));
    c.ancestor_id = std::stoi(single("ancestor_id"));
    const auto parent = single("parent_member_id");
    if (parent != "-") c.parent_member_id = std::stoi(parent);
    for (const auto& pair : next("h")) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) throw Error("checkpoint: bad hyperparameter '" + pair + "'");
      const std::string name = pair.substr(0, colon);
      const std::string value = pair.substr(colon + 1);
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        c.h.emplace(name, value.substr(1, value.size() - 2));
      } else {
        c.h.emplace(name, parse_double(value));
      }
    }
    c.window = sized_list("window");
    const auto theta = sized_list("theta");
    c.theta = Eigen::Map<const ParamVector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  } catch (const std::logic_error& ex) {
    throw Error(std::string("checkpoint: malformed field (") + ex.what() + ")");
  }
  return c;
}

MemberState apply_exploit(const MemberState& dst, const Checkpoint& src, ExploitMask mask) {
  MemberState next = dst;
  const bool weights = mask == ExploitMask::all || mask == ExploitMask::weights_only;
  const bool hyper = mask == ExploitMask::all || mask == ExploitMask::hyperparams_only;
  if (!weights && !hyper) throw Error("exploit copy with mask 'none'");
  if (weights) {
    next.theta = src.theta;
    next.ancestor_id = src.ancestor_id;
    next.window = EvalWindow(dst.window.capacity());
    for (auto it = src.window.rbegin(); it != src.window.rend(); ++it) next.window.push(*it);
    next.p = src.p;
  }
  if (hyper) next.h = src.h;
  next.steps_since_event = 0;
  ++next.version;
  return next;
}

// ---------------------------------------------------------------------------

PopulationStore::PopulationStore(std::vector<MemberState> initial)
    : members_(std::move(initial)), latest_checkpoint_(members_.size()) {
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (members_[i].id != static_cast<MemberId>(i)) {
      throw Error("store members must have dense ids 0..N-1 in order");
    }
  }
}

void PopulationStore::check_id(MemberId id) const {
  if (id < 0 || id >= size()) throw Error("unknown member id " + std::to_string(id));
}

PublishAck PopulationStore::publish(const MemberState& state) {
  check_id(state.id);
  std::unique_lock lock(mutex_);
  auto& slot = members_[static_cast<std::size_t>(state.id)];
  if (state.version <= slot.version) {
    throw StaleWriteError("stale publish for member " + std::to_string(state.id) + ": version " +
                          std::to_string(state.version) + " <= stored " +
                          std::to_string(slot.version));
  }
  slot = state;
  return {state.id, state.version};
}

StoreSnapshot PopulationStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return {members_, event_counter_};
}

MemberState PopulationStore::latest(MemberId id) const {
  check_id(id);
  std::shared_lock lock(mutex_);
  return members_[static_cast<std::size_t>(id)];
}

CheckpointRef PopulationStore::save_checkpoint(const MemberState& state,
                                               std::optional<MemberId> parent_member_id) {
  check_id(state.id);
  if (!all_finite(state.theta)) throw Error("refusing to checkpoint non-finite theta");
  std::unique_lock lock(mutex_);
  Checkpoint c;
  c.member_id = state.id;
  c.t = state.t;
  c.theta = state.theta;
  c.h = state.h;
  c.p = state.p;
  c.ancestor_id = state.ancestor_id;
  c.parent_member_id = parent_member_id;
  c.created_at = ++checkpoint_counter_;
  c.window = state.window.values();
  persist(c);
  live_.insert(c.ref());

  auto& latest = latest_checkpoint_[static_cast<std::size_t>(state.id)];
  if (latest && !pinned_.contains(*latest)) {
    discard(*latest);
    live_.erase(*latest);
  }
  latest = c.ref();
  return c.ref();
}

Checkpoint PopulationStore::load_checkpoint(CheckpointRef ref) const {
  std::shared_lock lock(mutex_);
  if (!live_.contains(ref)) {
    throw Error("unknown checkpoint " + std::to_string(ref.member_id) + "/" +
                std::to_string(ref.created_at));
  }
  return fetch(ref);
}

std::optional<CheckpointRef> PopulationStore::latest_checkpoint(MemberId id) const {
  check_id(id);
  std::shared_lock lock(mutex_);
  return latest_checkpoint_[static_cast<std::size_t>(id)];
}

Checkpoint PopulationStore::acquire_source(MemberId source) {
  check_id(source);
  std::unique_lock lock(mutex_);
  const auto& latest = latest_checkpoint_[static_cast<std::size_t>(source)];
  if (!latest) throw Error("member " + std::to_string(source) + " has no checkpoint yet");
  pinned_.insert(*latest);
  return fetch(*latest);
}

MemberState PopulationStore::exploit_copy(MemberId dst, const Checkpoint& src, ExploitMask mask) {
  check_id(dst);
  std::unique_lock lock(mutex_);
  auto& slot = members_[static_cast<std::size_t>(dst)];
  MemberState next = apply_exploit(slot, src, mask);
  pinned_.insert(src.ref());

  LineageEvent e;
  e.member_id = dst;
  e.kind = EventKind::exploit;
  e.parent_member_id = src.member_id;
  e.mask = mask;
  e.ancestor_id = next.ancestor_id;
  e.checkpoint = src.created_at;
  e.h_before = slot.h;
  e.h_after = next.h;
  e.p_at_event = next.p;
  e.t_at_event = next.t;
  slot = next;
  log_event_locked(std::move(e));
  return next;
}

void PopulationStore::mark_failed(MemberId id) {
  check_id(id);
  std::unique_lock lock(mutex_);
  auto& slot = members_[static_cast<std::size_t>(id)];
  slot.failed = true;
  ++slot.version;
  LineageEvent e;
  e.member_id = id;
  e.kind = EventKind::fail;
  e.ancestor_id = slot.ancestor_id;
  e.h_before = slot.h;
  e.h_after = slot.h;
  e.p_at_event = slot.p;
  e.t_at_event = slot.t;
  log_event_locked(std::move(e));
}

std::uint64_t PopulationStore::log_event(LineageEvent event) {
  std::unique_lock lock(mutex_);
  return log_event_locked(std::move(event));
}

std::uint64_t PopulationStore::log_event_locked(LineageEvent event) {
  event.event_counter = ++event_counter_;
  on_event(event);
  events_.push_back(std::move(event));
  return event_counter_;
}

std::vector<LineageEvent> PopulationStore::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::size_t PopulationStore::checkpoint_count() const {
  std::shared_lock lock(mutex_);
  return live_.size();
}

// ---------------------------------------------------------------------------

void MemoryStore::persist(const Checkpoint& c) { checkpoints_.insert_or_assign(c.ref(), c); }

Checkpoint MemoryStore::fetch(CheckpointRef ref) const {
  auto it = checkpoints_.find(ref);
  if (it == checkpoints_.end()) throw Error("checkpoint missing from memory store");
  return it->second;
}

void MemoryStore::discard(CheckpointRef ref) { checkpoints_.erase(ref); }

DirectoryStore::DirectoryStore(std::vector<MemberState> initial, std::filesystem::path run_dir)
    : PopulationStore(std::move(initial)), run_dir_(std::move(run_dir)) {
  std::filesystem::create_directories(run_dir_ / "checkpoints");
  event_log_.open(run_dir_ / "events.jsonl", std::ios::trunc);
  if (!event_log_) throw Error("cannot open " + (run_dir_ / "events.jsonl").string());
}

std::filesystem::path DirectoryStore::checkpoint_path(CheckpointRef ref) const {
  return run_dir_ / "checkpoints" / std::to_string(ref.member_id) /
         (std::to_string(ref.created_at) + ".ckpt");
}

void DirectoryStore::persist(const Checkpoint& c) {
  const auto path = checkpoint_path(c.ref());
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << serialize(c);
    if (!out.flush()) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint DirectoryStore::fetch(CheckpointRef ref) const {
  return read_checkpoint_file(checkpoint_path(ref));
}

void DirectoryStore::discard(CheckpointRef ref) {
  std::error_code ec;
  std::filesystem::remove(checkpoint_path(ref), ec);
}

void DirectoryStore::on_event(const LineageEvent& e) {
  event_log_ << to_json_line(e) << '\n';
  event_log_.flush();
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace pbt
