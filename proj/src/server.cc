#include "exner/server.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "exner/errors.h"
#include "exner/log.h"
#include "httplib.h"

namespace exner {

using json = nlohmann::json;

namespace {

json support_record(const SupportExample& ex) {
  return {{"id", ex.id},
          {"entity_type", ex.entity_type},
          {"tokens", ex.plain_tokens()},
          {"entity_start", ex.entity_start()},
          {"entity_end", ex.entity_end()}};
}

SupportExample support_from_record(const json& rec) {
  try {
    return make_support_example(rec.at("tokens").get<std::vector<std::string>>(),
                                rec.at("entity_start").get<std::size_t>(),
                                rec.at("entity_end").get<std::size_t>(),
                                rec.at("entity_type").get<std::string>(),
                                rec.value("id", std::string{}));
  } catch (const json::exception& e) {
    throw InputError(std::string("support record: ") + e.what());
  }
}

void write_all(int fd, const std::string& data, const std::string& what) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) throw std::runtime_error("write failed for " + what);
    off += static_cast<std::size_t>(n);
  }
}

void append_durable(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open journal " + path.string());
  try {
    write_all(fd, line + "\n", path.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
}

void write_file_durable(const std::filesystem::path& path, const std::string& data) {
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw std::runtime_error("cannot write " + tmp);
  try {
    write_all(fd, data, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

}  // namespace

SupportSet WorkspaceState::support_set() const {
  SupportSet set;
  for (const auto& ex : examples) set.add(ex);
  return set;
}

Workspace::Workspace(std::string id, std::shared_ptr<const Encoder> encoder,
                     std::optional<std::filesystem::path> journal_dir,
                     std::uint64_t snapshot_every)
    : id_(std::move(id)),
      encoder_(std::move(encoder)),
      journal_dir_(std::move(journal_dir)),
      snapshot_every_(snapshot_every),
      state_(std::make_shared<WorkspaceState>()) {
  if (id_.empty() || id_.find('/') != std::string::npos || id_[0] == '.') {
    throw InputError("invalid workspace id '" + id_ + "'");
  }
  if (journal_dir_) std::filesystem::create_directories(*journal_dir_);
}

std::shared_ptr<const WorkspaceState> Workspace::state() const {
  std::shared_lock lock(state_mu_);
  return state_;
}

std::shared_ptr<WorkspaceState> Workspace::copy_state() const {
  return std::make_shared<WorkspaceState>(*state());
}

std::filesystem::path Workspace::journal_path() const {
  return *journal_dir_ / (id_ + ".journal.jsonl");
}

std::filesystem::path Workspace::snapshot_path() const {
  return *journal_dir_ / (id_ + ".snapshot.json");
}

void Workspace::apply_entry(const json& entry, WorkspaceState& st) const {
  const std::string op = entry.at("op").get<std::string>();
  if (op == "upsert") {
    SupportExample ex = support_from_record(entry.at("support"));
    auto encoded = std::make_shared<EncodedSupport>(
        EncodedSupport{ex.id, ex.entity_type, encode_support(*encoder_, ex)});
    auto it = std::find_if(st.examples.begin(), st.examples.end(),
                           [&](const SupportExample& e) { return e.id == ex.id; });
    if (it != st.examples.end()) {
      const auto pos = static_cast<std::size_t>(it - st.examples.begin());
      st.examples[pos] = std::move(ex);
      st.supports[pos] = std::move(encoded);
    } else {
      st.examples.push_back(std::move(ex));
      st.supports.push_back(std::move(encoded));
    }
    st.next_id = entry.at("next_id").get<std::uint64_t>();
  } else if (op == "delete") {
    const std::string sid = entry.at("support_id").get<std::string>();
    auto it = std::find_if(st.examples.begin(), st.examples.end(),
                           [&](const SupportExample& e) { return e.id == sid; });
    if (it == st.examples.end()) throw NotFoundError("no support '" + sid + "'");
    const auto pos = it - st.examples.begin();
    st.examples.erase(it);
    st.supports.erase(st.supports.begin() + pos);
  } else if (op == "add_type") {
    const std::string type = entry.at("entity_type").get<std::string>();
    if (!std::binary_search(st.declared_types.begin(), st.declared_types.end(), type)) {
      st.declared_types.insert(
          std::upper_bound(st.declared_types.begin(), st.declared_types.end(), type), type);
    }
  } else if (op == "delete_type") {
    const std::string type = entry.at("entity_type").get<std::string>();
    const bool declared =
        std::binary_search(st.declared_types.begin(), st.declared_types.end(), type);
    const bool used = std::any_of(st.examples.begin(), st.examples.end(),
                                  [&](const SupportExample& e) { return e.entity_type == type; });
    if (!declared && !used) throw NotFoundError("no entity type '" + type + "'");
    std::erase(st.declared_types, type);
    for (std::size_t i = st.examples.size(); i-- > 0;) {
      if (st.examples[i].entity_type == type) {
        st.examples.erase(st.examples.begin() + static_cast<std::ptrdiff_t>(i));
        st.supports.erase(st.supports.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
  } else {
    throw InputError("unknown journal op '" + op + "'");
  }
  st.revision = entry.at("revision").get<std::uint64_t>();
}

void Workspace::commit(const json& entry, std::shared_ptr<const WorkspaceState> next) {
  if (journal_dir_) append_durable(journal_path(), entry.dump());
  {
    std::unique_lock lock(state_mu_);
    state_ = std::move(next);
  }
  if (journal_dir_ && snapshot_every_ > 0 && state()->revision % snapshot_every_ == 0) {
    write_snapshot_locked();
  }
}

std::string Workspace::upsert_support(SupportExample ex) {
  validate_support_example(ex);
  std::lock_guard lock(write_mu_);
  auto next = copy_state();
  const bool known = !ex.id.empty() &&
                     std::any_of(next->examples.begin(), next->examples.end(),
                                 [&](const SupportExample& e) { return e.id == ex.id; });
  std::uint64_t next_id = next->next_id;
  if (!known) {
    if (ex.id.empty()) ex.id = "s" + std::to_string(next_id++);
  }
  json entry = {{"op", "upsert"},
                {"revision", next->revision + 1},
                {"next_id", next_id},
                {"support", support_record(ex)}};
  apply_entry(entry, *next);
  commit(entry, std::move(next));
  return ex.id;
}

void Workspace::delete_support(const std::string& support_id) {
  std::lock_guard lock(write_mu_);
  auto next = copy_state();
  json entry = {{"op", "delete"}, {"revision", next->revision + 1}, {"support_id", support_id}};
  apply_entry(entry, *next);
  commit(entry, std::move(next));
}

void Workspace::add_entity_type(const std::string& entity_type) {
  if (entity_type.empty()) throw InputError("entity type name is empty");
  std::lock_guard lock(write_mu_);
  auto next = copy_state();
  json entry = {{"op", "add_type"}, {"revision", next->revision + 1}, {"entity_type", entity_type}};
  apply_entry(entry, *next);
  commit(entry, std::move(next));
}

std::size_t Workspace::delete_entity_type(const std::string& entity_type) {
  std::lock_guard lock(write_mu_);
  auto next = copy_state();
  const std::size_t before = next->examples.size();
  json entry = {{"op", "delete_type"}, {"revision", next->revision + 1}, {"entity_type", entity_type}};
  apply_entry(entry, *next);
  const std::size_t removed = before - next->examples.size();
  commit(entry, std::move(next));
  return removed;
}

Prediction Workspace::predict(const std::vector<std::string>& query_tokens,
                              const ScoringConfig& cfg,
                              std::uint64_t* revision_out) const {
  if (query_tokens.empty()) throw InputError("empty query");
  const auto st = state();
  if (st->supports.empty()) {
    throw ConflictError("workspace '" + id_ + "' has no support examples");
  }
  std::vector<EncodedSupport> view;
  view.reserve(st->supports.size());
  for (const auto& s : st->supports) view.push_back(*s);
  const auto groups = group_by_type(view);
  const EncodedSequence query = encoder_->encode(query_tokens);
  Prediction p = predict_encoded(query, groups, cfg);
  p.query_tokens.assign(query_tokens.begin(),
                        query_tokens.begin() + static_cast<std::ptrdiff_t>(query.num_tokens()));
  if (p.truncated) p.warnings.push_back("query truncated to max sequence length");
  if (revision_out) *revision_out = st->revision;
  return p;
}

void Workspace::write_snapshot() {
  if (!journal_dir_) return;
  std::lock_guard lock(write_mu_);
  write_snapshot_locked();
}

void Workspace::write_snapshot_locked() {
  const auto st = state();
  json snap = {{"revision", st->revision},
               {"next_id", st->next_id},
               {"declared_types", st->declared_types},
               {"supports", json::array()}};
  for (const auto& ex : st->examples) snap["supports"].push_back(support_record(ex));
  write_file_durable(snapshot_path(), snap.dump());
  write_file_durable(journal_path(), "");
}

void Workspace::recover() {
  if (!journal_dir_) return;
  std::lock_guard lock(write_mu_);
  auto st = std::make_shared<WorkspaceState>();
  if (std::filesystem::exists(snapshot_path())) {
    std::ifstream in(snapshot_path());
    const json snap = json::parse(in);
    st->revision = snap.at("revision").get<std::uint64_t>();
    st->next_id = snap.at("next_id").get<std::uint64_t>();
    st->declared_types = snap.at("declared_types").get<std::vector<std::string>>();
    for (const auto& rec : snap.at("supports")) {
      SupportExample ex = support_from_record(rec);
      st->supports.push_back(std::make_shared<EncodedSupport>(
          EncodedSupport{ex.id, ex.entity_type, encode_support(*encoder_, ex)}));
      st->examples.push_back(std::move(ex));
    }
  }
  if (std::filesystem::exists(journal_path())) {
    std::ifstream in(journal_path());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json entry;
      try {
        entry = json::parse(line);
      } catch (const json::parse_error&) {
        warn("workspace ", id_, ": ignoring torn journal line");
        break;
      }
      if (entry.at("revision").get<std::uint64_t>() <= st->revision) continue;
      apply_entry(entry, *st);
    }
  }
  std::unique_lock slock(state_mu_);
  state_ = std::move(st);
}

ScoringConfig scoring_from_json(const json& body, ScoringConfig cfg) {
  if (body.contains("algorithm")) {
    cfg.algorithm = parse_scoring_algorithm(body.at("algorithm").get<std::string>());
  }
  if (body.contains("k")) cfg.k = body.at("k").get<int>();
  if (body.contains("temperature")) cfg.temperature = body.at("temperature").get<double>();
  if (body.contains("top_n")) cfg.top_n = body.at("top_n").get<int>();
  if (body.contains("max_span_length") && !body.at("max_span_length").is_null()) {
    cfg.max_span_length = body.at("max_span_length").get<std::size_t>();
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> query_from_json(const json& body) {
  std::vector<std::string> tokens;
  if (body.contains("tokens")) {
    tokens = body.at("tokens").get<std::vector<std::string>>();
  } else if (body.contains("text")) {
    std::istringstream in(body.at("text").get<std::string>());
    std::string t;
    while (in >> t) tokens.push_back(t);
  } else {
    throw InputError("request needs 'tokens' or 'text'");
  }
  if (tokens.empty()) throw InputError("empty query");
  return tokens;
}

struct Server::Background {
  std::thread thread;
};

Server::Server(ServerConfig config, std::shared_ptr<const Encoder> encoder)
    : config_(std::move(config)),
      encoder_(std::move(encoder)),
      http_(std::make_unique<httplib::Server>()) {
  config_.scoring.validate();
  install_routes();
}

Server::~Server() {
  stop();
  if (background_ && background_->thread.joinable()) background_->thread.join();
}

std::shared_ptr<Workspace> Server::find(const std::string& id) const {
  std::lock_guard lock(ws_mu_);
  auto it = workspaces_.find(id);
  return it == workspaces_.end() ? nullptr : it->second;
}

std::shared_ptr<Workspace> Server::get_or_create(const std::string& id) {
  std::lock_guard lock(ws_mu_);
  auto& slot = workspaces_[id];
  if (!slot) {
    try {
      slot = std::make_shared<Workspace>(id, encoder_, config_.journal_dir,
                                         config_.snapshot_every);
    } catch (...) {
      workspaces_.erase(id);
      throw;
    }
  }
  return slot;
}

void Server::recover_all() {
  if (!config_.journal_dir || !std::filesystem::exists(*config_.journal_dir)) return;
  std::set<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(*config_.journal_dir)) {
    const std::string name = entry.path().filename().string();
    for (const std::string suffix : {".journal.jsonl", ".snapshot.json"}) {
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        ids.insert(name.substr(0, name.size() - suffix.size()));
      }
    }
  }
  for (const auto& id : ids) {
    auto ws = get_or_create(id);
    ws->recover();
    info("recovered workspace ", id, " at revision ", ws->revision());
  }
}

void Server::flush() {
  std::vector<std::shared_ptr<Workspace>> all;
  {
    std::lock_guard lock(ws_mu_);
    for (const auto& [id, ws] : workspaces_) all.push_back(ws);
  }
  for (const auto& ws : all) ws->write_snapshot();
}

json Server::predict_json(const std::string& id, const json& body) const {
  auto ws = find(id);
  if (!ws) throw ConflictError("workspace '" + id + "' has no support examples");
  const ScoringConfig cfg = scoring_from_json(body, config_.scoring);
  const auto tokens = query_from_json(body);
  std::uint64_t revision = 0;
  const Prediction p = ws->predict(tokens, cfg, &revision);
  json out = prediction_to_json(p);
  out["revision"] = revision;
  return out;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code,
                 const std::string& message) {
  reply(res, status, {{"code", code}, {"message", message}});
}

template <typename F>
auto guarded(F handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const NotFoundError& e) {
      reply_error(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
      reply_error(res, 409, "conflict", e.what());
    } catch (const InputError& e) {
      reply_error(res, 422, "unprocessable", e.what());
    } catch (const json::exception& e) {
      reply_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  };
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void Server::install_routes() {
  auto& s = *http_;
  s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          json revisions = json::object();
          {
            std::lock_guard lock(ws_mu_);
            for (const auto& [id, ws] : workspaces_) revisions[id] = ws->revision();
          }
          reply(res, 200, {{"status", "ok"},
                           {"checkpoint", config_.checkpoint_ref},
                           {"revisions", std::move(revisions)}});
        }));

  s.Get(R"(/workspaces/([^/]+)/revision)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto ws = find(req.matches[1]);
          if (!ws) throw NotFoundError("no workspace '" + std::string(req.matches[1]) + "'");
          reply(res, 200, {{"revision", ws->revision()}});
        }));

  s.Get(R"(/workspaces/([^/]+)/entity-types)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto ws = find(req.matches[1]);
          if (!ws) throw NotFoundError("no workspace '" + std::string(req.matches[1]) + "'");
          const auto st = ws->state();
          std::map<std::string, std::size_t> counts;
          for (const auto& t : st->declared_types) counts[t];
          for (const auto& ex : st->examples) ++counts[ex.entity_type];
          json types = json::array();
          for (const auto& [name, n] : counts) types.push_back({{"name", name}, {"count", n}});
          reply(res, 200, {{"entity_types", std::move(types)}, {"revision", st->revision}});
        }));

  s.Post(R"(/workspaces/([^/]+)/entity-types)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = body_of(req);
           auto ws = get_or_create(req.matches[1]);
           ws->add_entity_type(body.at("entity_type").get<std::string>());
           reply(res, 200, {{"revision", ws->revision()}});
         }));

  s.Delete(R"(/workspaces/([^/]+)/entity-types(?:/([^/]+))?)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             auto ws = find(req.matches[1]);
             if (!ws) throw NotFoundError("no workspace '" + std::string(req.matches[1]) + "'");
             std::string type = req.matches[2];
             if (type.empty()) type = body_of(req).at("entity_type").get<std::string>();
             const std::size_t removed = ws->delete_entity_type(type);
             reply(res, 200, {{"revision", ws->revision()}, {"removed_supports", removed}});
           }));

  s.Get(R"(/workspaces/([^/]+)/supports)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto ws = find(req.matches[1]);
          if (!ws) throw NotFoundError("no workspace '" + std::string(req.matches[1]) + "'");
          const auto st = ws->state();
          json list = json::array();
          for (const auto& ex : st->examples) list.push_back(support_record(ex));
          reply(res, 200, {{"supports", std::move(list)}, {"revision", st->revision}});
        }));

  s.Post(R"(/workspaces/([^/]+)/supports)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = body_of(req);
           SupportExample ex = support_from_record(body);
           auto ws = get_or_create(req.matches[1]);
           const std::string id = ws->upsert_support(std::move(ex));
           reply(res, 200, {{"support_id", id}, {"revision", ws->revision()}});
         }));

  s.Delete(R"(/workspaces/([^/]+)/supports(?:/([^/]+))?)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             auto ws = find(req.matches[1]);
             if (!ws) throw NotFoundError("no workspace '" + std::string(req.matches[1]) + "'");
             std::string sid = req.matches[2];
             if (sid.empty()) sid = body_of(req).at("support_id").get<std::string>();
             ws->delete_support(sid);
             reply(res, 200, {{"revision", ws->revision()}});
           }));

  s.Post(R"(/workspaces/([^/]+)/predict)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           reply(res, 200, predict_json(req.matches[1], body_of(req)));
         }));
}

void Server::run(const std::function<void(int)>& on_bound) {
  recover_all();
  if (config_.port == 0) {
    bound_port_ = http_->bind_to_any_port(config_.host);
  } else if (http_->bind_to_port(config_.host, config_.port)) {
    bound_port_ = config_.port;
  }
  if (bound_port_ <= 0) {
    throw std::runtime_error("cannot bind " + config_.host + ":" +
                             std::to_string(config_.port) + " (port in use?)");
  }
  info("serving on ", config_.host, ":", bound_port_);
  if (on_bound) on_bound(bound_port_);
  http_->listen_after_bind();
}

int Server::start_background() {
  recover_all();
  bound_port_ = http_->bind_to_any_port(config_.host);
  if (bound_port_ <= 0) throw std::runtime_error("cannot bind an ephemeral port");
  background_ = std::make_unique<Background>();
  background_->thread = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound_port_;
}

void Server::stop() {
  if (http_) http_->stop();
}

}  // namespace exner
