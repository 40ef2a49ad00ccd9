#ifndef EXNER_SERVER_H_
#define EXNER_SERVER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "exner/corpus.h"
#include "exner/encoder.h"
#include "exner/scorer.h"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace exner {

// Immutable state of a workspace at one revision. Predictions run against a
// single snapshot, so a concurrent mutation is either fully visible or not.
struct WorkspaceState {
  std::uint64_t revision = 0;
  std::uint64_t next_id = 1;
  std::vector<std::string> declared_types;  // sorted
  std::vector<std::shared_ptr<const EncodedSupport>> supports;  // insertion order
  std::vector<SupportExample> examples;  // parallel to `supports`

  SupportSet support_set() const;
};

// A live support set with cached encodings. Writers are serialized; readers
// take a snapshot pointer and never wait on a writer's encoding work.
//
// With a journal directory, every mutation is appended (and fsynced) to
// <dir>/<id>.journal.jsonl before it is acknowledged, and the state is
// periodically compacted into <dir>/<id>.snapshot.json.
class Workspace {
 public:
  Workspace(std::string id, std::shared_ptr<const Encoder> encoder,
            std::optional<std::filesystem::path> journal_dir = std::nullopt,
            std::uint64_t snapshot_every = 64);

  const std::string& id() const { return id_; }
  std::shared_ptr<const WorkspaceState> state() const;
  std::uint64_t revision() const { return state()->revision; }

  // Stores `ex` and caches its encoding. An empty or unknown ex.id gets a new
  // "s<n>" id; a known id is replaced. Returns the id.
  std::string upsert_support(SupportExample ex);
  // Throws NotFoundError for an unknown id.
  void delete_support(const std::string& support_id);
  void add_entity_type(const std::string& entity_type);
  // Removes the type and all its supports; returns how many were removed.
  // Throws NotFoundError when the type is unknown.
  std::size_t delete_entity_type(const std::string& entity_type);

  // Throws ConflictError when the workspace has no supports.
  Prediction predict(const std::vector<std::string>& query_tokens,
                     const ScoringConfig& cfg,
                     std::uint64_t* revision_out = nullptr) const;

  // Writes the compacted snapshot and truncates the journal.
  void write_snapshot();

  // Rebuilds from <dir>/<id>.snapshot.json and <dir>/<id>.journal.jsonl.
  void recover();

 private:
  void commit(const nlohmann::json& journal_entry,
              std::shared_ptr<const WorkspaceState> next);
  std::shared_ptr<WorkspaceState> copy_state() const;
  void write_snapshot_locked();
  void apply_entry(const nlohmann::json& entry, WorkspaceState& st) const;
  std::filesystem::path journal_path() const;
  std::filesystem::path snapshot_path() const;

  std::string id_;
  std::shared_ptr<const Encoder> encoder_;
  std::optional<std::filesystem::path> journal_dir_;
  std::uint64_t snapshot_every_;

  std::mutex write_mu_;
  mutable std::shared_mutex state_mu_;  // guards the pointer swap only
  std::shared_ptr<const WorkspaceState> state_;
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> journal_dir;
  std::uint64_t snapshot_every = 64;
  ScoringConfig scoring;
  std::string checkpoint_ref;
};

// HTTP+JSON front end over named workspaces:
//   GET    /health
//   GET    /workspaces/{id}/revision
//   GET    /workspaces/{id}/entity-types
//   POST   /workspaces/{id}/entity-types          {"entity_type"}
//   DELETE /workspaces/{id}/entity-types[/{type}]  (or {"entity_type"} body)
//   GET    /workspaces/{id}/supports
//   POST   /workspaces/{id}/supports              support JSON record
//   DELETE /workspaces/{id}/supports[/{sid}]       (or {"support_id"} body)
//   POST   /workspaces/{id}/predict               {"tokens"} or {"text"}
// Errors are {"code", "message"} with 400/404/409/422 statuses.
class Server {
 public:
  Server(ServerConfig config, std::shared_ptr<const Encoder> encoder);
  ~Server();

  // Recovers journaled workspaces, binds (port 0 picks a free port), calls
  // `on_bound` with the port, and serves until stop(). Throws
  // std::runtime_error if the port cannot be bound.
  void run(const std::function<void(int)>& on_bound = {});
  // Binds to an ephemeral port and serves on a background thread.
  int start_background();
  void stop();
  // Snapshots every workspace (clean shutdown).
  void flush();

  // Existing workspace or nullptr.
  std::shared_ptr<Workspace> find(const std::string& id) const;
  std::shared_ptr<Workspace> get_or_create(const std::string& id);

  int port() const { return bound_port_; }

 private:
  void install_routes();
  void recover_all();
  nlohmann::json predict_json(const std::string& id, const nlohmann::json& body) const;

  ServerConfig config_;
  std::shared_ptr<const Encoder> encoder_;
  std::unique_ptr<httplib::Server> http_;
  mutable std::mutex ws_mu_;
  std::map<std::string, std::shared_ptr<Workspace>> workspaces_;
  int bound_port_ = 0;
  struct Background;
  std::unique_ptr<Background> background_;
};

// Scoring fields of a request body layered over `defaults`.
ScoringConfig scoring_from_json(const nlohmann::json& body, ScoringConfig defaults);

// Query tokens from {"tokens": [...]} or whitespace-split {"text": "..."}.
std::vector<std::string> query_from_json(const nlohmann::json& body);

}  // namespace exner

#endif  // EXNER_SERVER_H_
