#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/io.hpp"
#include "toolweave/text.hpp"

namespace toolweave {

enum class Role { Propose, Judge, Generate, PlanJudge, Embed };

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::Propose: return "propose";
    case Role::Judge: return "judge";
    case Role::Generate: return "generate";
    case Role::PlanJudge: return "plan_judge";
    case Role::Embed: return "embed";
  }
  return "propose";
}

inline Role parse_role(std::string_view raw) {
  if (raw == "propose") return Role::Propose;
  if (raw == "judge") return Role::Judge;
  if (raw == "generate") return Role::Generate;
  if (raw == "plan_judge") return Role::PlanJudge;
  if (raw == "embed") return Role::Embed;
  fail(ErrorCode::MalformedRecord, "unknown gateway role '" + std::string(raw) + "'");
}

enum class GatewayMode { Live, Replay, Stub };

inline std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::Live: return "live";
    case GatewayMode::Replay: return "replay";
    case GatewayMode::Stub: return "stub";
  }
  return "stub";
}

inline GatewayMode parse_gateway_mode(std::string_view raw) {
  if (raw == "live") return GatewayMode::Live;
  if (raw == "replay") return GatewayMode::Replay;
  if (raw == "stub") return GatewayMode::Stub;
  fail(ErrorCode::ConfigError, "mode must be live, replay or stub (got '" + std::string(raw) + "')");
}

/// 128-bit request fingerprint: two FNV-1a passes with distinct offset bases
/// over "role \x1f payload".
inline std::string request_fingerprint(Role role, std::string_view payload) {
  std::string key(to_string(role));
  key.push_back('\x1f');
  key.append(payload);
  return hex64(fnv1a64(key)) + hex64(fnv1a64(key, 0x84222325cbf29ce4ULL));
}

struct GatewayRequest {
  Role role = Role::Propose;
  std::string payload;

  std::string fingerprint() const { return request_fingerprint(role, payload); }
};

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

struct FixtureRecord {
  std::string fingerprint;
  Role role = Role::Propose;
  std::string response;
  std::string model;
  std::string recorded_at;
  friend bool operator==(const FixtureRecord&, const FixtureRecord&) = default;
};

class FixtureFile {
 public:
  /// Inserts or replaces; returns true when an existing entry with a
  /// different response was overwritten.
  bool put(FixtureRecord rec) {
    auto it = records_.find(rec.fingerprint);
    if (it == records_.end()) {
      records_.emplace(rec.fingerprint, std::move(rec));
      return false;
    }
    const bool conflict = it->second.response != rec.response;
    it->second = std::move(rec);
    return conflict;
  }

  const FixtureRecord* find(const std::string& fingerprint) const {
    auto it = records_.find(fingerprint);
    return it == records_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  std::string serialize() const {
    std::string out;
    for (const auto& [_, r] : records_) {
      Json j = {{"fingerprint", r.fingerprint},
                {"role", std::string(to_string(r.role))},
                {"response", r.response}};
      if (!r.model.empty()) j["model"] = r.model;
      if (!r.recorded_at.empty()) j["recorded_at"] = r.recorded_at;
      out += j.dump();
      out += '\n';
    }
    return out;
  }

  static FixtureFile parse(const std::string& text, const std::string& source = "") {
    FixtureFile f;
    for_each_jsonl(text, source, [&](const Json& j, std::size_t line_no) {
      FixtureRecord r;
      r.fingerprint = require_field(j, "fingerprint", line_no).get<std::string>();
      r.role = parse_role(require_field(j, "role", line_no).get<std::string>());
      r.response = require_field(j, "response", line_no).get<std::string>();
      r.model = string_field(j, "model", line_no);
      r.recorded_at = string_field(j, "recorded_at", line_no);
      if (f.find(r.fingerprint) != nullptr) {
        fail(ErrorCode::FingerprintCollision,
             source + " line " + std::to_string(line_no) + ": fingerprint " + r.fingerprint + " repeated");
      }
      f.put(std::move(r));
    });
    return f;
  }

  static FixtureFile load(const std::filesystem::path& path) {
    return parse(read_file(path), path.string());
  }
  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

  friend bool operator==(const FixtureFile&, const FixtureFile&) = default;

 private:
  std::map<std::string, FixtureRecord> records_;
};

struct FixtureMergeResult {
  FixtureFile merged;
  std::vector<std::string> warnings;
};

/// Union keyed by fingerprint; on conflicting responses `later` wins.
inline FixtureMergeResult merge_fixtures(const FixtureFile& earlier, const FixtureFile& later) {
  FixtureMergeResult result{earlier, {}};
  for (const auto& [fp, rec] : later) {
    if (result.merged.put(rec)) {
      result.warnings.push_back("fingerprint " + fp + " (" + std::string(to_string(rec.role)) +
                                ") overwritten by later session");
    }
  }
  return result;
}

/// Builds a fixture from parallel request/response lists. Identical requests
/// collapse to one entry; two different payloads sharing a fingerprint throw.
inline FixtureFile record_session(const std::vector<GatewayRequest>& requests,
                                  const std::vector<std::string>& responses,
                                  const std::string& model = "") {
  if (requests.size() != responses.size()) {
    fail(ErrorCode::InvalidConfig, "record_session: request/response count mismatch");
  }
  FixtureFile file;
  std::map<std::string, const GatewayRequest*> seen;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto fp = requests[i].fingerprint();
    auto [it, inserted] = seen.emplace(fp, &requests[i]);
    if (!inserted && (it->second->payload != requests[i].payload || it->second->role != requests[i].role)) {
      fail(ErrorCode::FingerprintCollision, "fingerprint " + fp + " shared by distinct requests");
    }
    file.put(FixtureRecord{fp, requests[i].role, responses[i], model, ""});
  }
  return file;
}

// ---------------------------------------------------------------------------
// Transport and gateway
// ---------------------------------------------------------------------------

/// Network boundary for live mode. Implementations throw Error with
/// ProviderHttpError or Timeout.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const GatewayRequest& request) = 0;
};

using StubResponder = std::function<std::string(const GatewayRequest&)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct GatewayOptions {
  GatewayMode mode = GatewayMode::Stub;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double requests_per_second = 0.0;  // 0 disables rate limiting
  bool record = false;
  std::string model;
};

/// Uniform client for chat and embedding calls. Safe to share across threads.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options) : options_(std::move(options)) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  GatewayMode mode() const { return options_.mode; }

  void set_fixtures(FixtureFile fixtures) { fixtures_ = std::move(fixtures); }
  void set_transport(std::shared_ptr<Transport> transport) { transport_ = std::move(transport); }
  void set_stub(StubResponder stub) { stub_ = std::move(stub); }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  std::string complete(const GatewayRequest& request) {
    switch (options_.mode) {
      case GatewayMode::Replay: return replay(request);
      case GatewayMode::Stub: {
        if (!stub_) fail(ErrorCode::GatewayError, "stub mode without a stub responder");
        return stub_(request);
      }
      case GatewayMode::Live: return live(request);
    }
    fail(ErrorCode::GatewayError, "unreachable gateway mode");
  }

  std::string complete(Role role, std::string payload) {
    return complete(GatewayRequest{role, std::move(payload)});
  }

  /// Everything answered in live mode so far, as a fixture file.
  FixtureFile recorded_session() const {
    std::lock_guard lock(mutex_);
    return recorded_;
  }

  std::size_t transport_calls() const { return transport_calls_.load(); }

 private:
  std::string replay(const GatewayRequest& request) const {
    const auto fp = request.fingerprint();
    const FixtureRecord* rec = fixtures_.find(fp);
    if (rec == nullptr || rec->role != request.role) {
      fail(ErrorCode::MissingFixture, "no recorded " + std::string(to_string(request.role)) +
                                          " response for fingerprint " + fp);
    }
    return rec->response;
  }

  std::string live(const GatewayRequest& request) {
    if (!transport_) fail(ErrorCode::GatewayError, "live mode without a transport");
    std::chrono::milliseconds backoff = options_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      acquire_token();
      try {
        ++transport_calls_;
        std::string response = transport_->send(request);
        if (options_.record) {
          std::lock_guard lock(mutex_);
          const auto fp = request.fingerprint();
          auto [it, inserted] = recorded_payloads_.emplace(fp, request.payload);
          if (!inserted && it->second != request.payload) {
            fail(ErrorCode::FingerprintCollision, "fingerprint " + fp + " shared by distinct requests");
          }
          recorded_.put(FixtureRecord{fp, request.role, response, options_.model, ""});
        }
        return response;
      } catch (const Error& e) {
        const bool retryable = e.code() == ErrorCode::Timeout || e.code() == ErrorCode::ProviderHttpError;
        if (!retryable || attempt >= options_.max_attempts) throw;
        sleeper_(backoff);
        backoff *= 2;
      }
    }
  }

  // Token bucket with capacity max(1, rps).
  void acquire_token() {
    if (options_.requests_per_second <= 0.0) return;
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      const double capacity = std::max(1.0, options_.requests_per_second);
      if (!bucket_started_) {
        tokens_ = capacity;
        last_refill_ = now;
        bucket_started_ = true;
      }
      const double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      tokens_ = std::min(capacity, tokens_ + elapsed * options_.requests_per_second);
      last_refill_ = now;
      tokens_ -= 1.0;
      if (tokens_ < 0.0) {
        wait = std::chrono::milliseconds(
            static_cast<long long>(std::ceil(-tokens_ / options_.requests_per_second * 1000.0)));
      }
    }
    if (wait.count() > 0) sleeper_(wait);
  }

  GatewayOptions options_;
  FixtureFile fixtures_;
  std::shared_ptr<Transport> transport_;
  StubResponder stub_;
  Sleeper sleeper_;

  mutable std::mutex mutex_;
  FixtureFile recorded_;
  std::map<std::string, std::string> recorded_payloads_;
  std::atomic<std::size_t> transport_calls_{0};
  double tokens_ = 0.0;
  bool bucket_started_ = false;
  std::chrono::steady_clock::time_point last_refill_{};
};

}  // namespace toolweave
