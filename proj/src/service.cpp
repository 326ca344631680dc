/* Copyright 2026 The avsec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "avsec/service.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <random>
#include <sstream>
#include <tuple>

#include "avsec/error.hpp"
#include "avsec/hashing.hpp"
#include "avsec/wav.hpp"

namespace avsec {

using json = nlohmann::json;

ServiceConfig service_config_from(const Settings& s, ServiceConfig c) {
  if (auto v = s.get_string("service.host")) c.host = *v;
  if (auto v = s.get_int("service.port")) c.port = static_cast<int>(*v);
  if (auto v = s.get_string("service.data_dir")) c.data_dir = *v;
  if (auto v = s.get_string("service.manifest")) c.manifest = *v;
  if (auto v = s.get_string("service.audio_dir")) c.audio_dir = *v;
  if (auto v = s.get_string("service.ui_dir")) c.ui_dir = *v;
  if (auto v = s.get_string("service.campaign")) c.campaign_id = *v;
  if (auto v = s.get_int("service.raters_per_clip")) c.raters_per_clip = static_cast<int>(*v);
  if (auto v = s.get_double("service.lease_seconds")) c.lease_seconds = *v;
  if (auto v = s.get_double("service.majority_fraction")) c.majority_fraction = *v;
  if (c.port < 0 || c.port > 65535) throw UsageError("service.port out of range");
  if (c.raters_per_clip < 1) throw UsageError("service.raters_per_clip must be >= 1");
  if (!(c.lease_seconds > 0)) throw UsageError("service.lease_seconds must be > 0");
  return c;
}

std::string_view submit_status_name(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::kAccepted: return "accepted";
    case SubmitStatus::kDuplicate: return "duplicate";
    case SubmitStatus::kConflict: return "conflict";
    case SubmitStatus::kInvalid: return "invalid";
    case SubmitStatus::kUnknownClip: return "unknown_clip";
    case SubmitStatus::kClosed: return "closed";
  }
  return "invalid";
}

namespace {

std::string random_hex(std::size_t bytes) {
  static std::mutex mu;
  static std::random_device rd;
  static constexpr char kHex[] = "0123456789abcdef";
  std::lock_guard lock(mu);
  std::string out;
  for (std::size_t i = 0; i < bytes; ++i) {
    const auto b = rd() & 0xFF;
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

json action_list() {
  json a = json::array();
  for (auto name : ActionTaxonomy::standard().actions()) a.push_back(std::string(name));
  return a;
}

}  // namespace

Campaign::Campaign(std::string id, std::vector<std::string> clip_ids,
                   std::filesystem::path log_path, Options opts)
    : id_(std::move(id)),
      clips_(std::move(clip_ids)),
      log_path_(std::move(log_path)),
      raters_(opts.raters_per_clip),
      lease_seconds_(opts.lease_seconds),
      majority_fraction_(opts.majority_fraction),
      clock_(std::move(opts.clock)) {
  if (raters_ < 1) throw UsageError("raters per clip must be >= 1");
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
  }
  state_.resize(clips_.size());
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (!index_.emplace(clips_[i], i).second) {
      throw DataError("campaign '" + id_ + "': duplicate clip '" + clips_[i] + "'");
    }
  }
  secret_ = opts.secret.value_or(random_hex(16));
  replay();
  for (const auto& c : clips_) handles_.emplace(handle_for(c), c);
}

Campaign::~Campaign() {
  if (log_) std::fclose(log_);
}

std::string Campaign::handle_for(const std::string& clip_id) const {
  return sha256_hex(secret_ + ":" + id_ + ":" + clip_id).substr(0, 24);
}

std::optional<std::string> Campaign::clip_for_handle(const std::string& handle) const {
  if (auto it = handles_.find(handle); it != handles_.end()) return it->second;
  return std::nullopt;
}

void Campaign::replay() {
  if (!log_path_.parent_path().empty()) std::filesystem::create_directories(log_path_.parent_path());
  bool have_header = false;
  if (std::filesystem::exists(log_path_)) {
    std::ifstream in(log_path_, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t good_end = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // torn final write
      ++line_no;
      const std::string_view line(text.data() + pos, nl - pos);
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(log_path_.string() + ":" + std::to_string(line_no) + ": corrupt log record");
      }
      const std::string type = j.value("type", "");
      if (type == "campaign") {
        if (j.at("id") != id_) throw DataError(log_path_.string() + ": log belongs to campaign " + j.at("id").dump());
        if (j.at("actions") != action_list()) {
          throw DataError(log_path_.string() + ": action taxonomy differs from this build");
        }
        if (j.at("raters").get<int>() != raters_) {
          throw DataError(log_path_.string() + ": log was created with raters_per_clip=" +
                          j.at("raters").dump());
        }
        secret_ = j.at("secret").get<std::string>();
        have_header = true;
      } else if (type == "session") {
        sessions_.insert(j.at("session").get<std::string>());
      } else if (type == "submit") {
        const std::string clip = j.at("clip").get<std::string>();
        auto it = index_.find(clip);
        if (it == index_.end()) {
          throw DataError(log_path_.string() + ":" + std::to_string(line_no) + ": unknown clip '" + clip + "'");
        }
        const auto scores = j.at("scores").get<std::vector<int>>();
        std::array<std::uint8_t, kNumActions> s{};
        for (std::size_t a = 0; a < kNumActions; ++a) s[a] = static_cast<std::uint8_t>(scores.at(a));
        state_[it->second].by_session[j.at("session").get<std::string>()] = s;
      } else if (type == "close") {
        open_ = false;
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end < text.size()) std::filesystem::resize_file(log_path_, good_end);
  }
  log_ = std::fopen(log_path_.c_str(), "ab");
  if (!log_) throw DataError("cannot open campaign log " + log_path_.string());
  if (!have_header) {
    json h = {{"type", "campaign"}, {"id", id_}, {"secret", secret_}, {"raters", raters_},
              {"actions", action_list()}};
    append(h.dump());
  }
}

void Campaign::append(const std::string& line) {
  std::lock_guard lock(log_mu_);
  const std::string rec = line + "\n";
  if (std::fwrite(rec.data(), 1, rec.size(), log_) != rec.size() || std::fflush(log_) != 0 ||
      ::fsync(::fileno(log_)) != 0) {
    throw DataError("write to campaign log " + log_path_.string() + " failed");
  }
}

double Campaign::now() const { return clock_(); }

int Campaign::active_leases(const ClipState& c, const std::string& except, double t) const {
  int n = 0;
  for (const auto& [session, expiry] : c.leases) {
    if (session != except && expiry > t) ++n;
  }
  return n;
}

std::string Campaign::open_session(const std::map<std::string, bool>& checklist) {
  std::unique_lock lock(mu_);
  std::string token = "s" + random_hex(12);
  while (sessions_.contains(token)) token = "s" + random_hex(12);
  json rec = {{"type", "session"}, {"session", token}, {"checklist", checklist}};
  append(rec.dump());
  sessions_.insert(token);
  return token;
}

NextResult Campaign::next(const std::string& session) {
  std::unique_lock lock(mu_);
  if (!sessions_.contains(session)) throw UsageError("unknown session");
  NextResult r;
  if (!open_) return r;
  const double t = now();

  auto eligible = [&](std::size_t i) {
    const ClipState& c = state_[i];
    return !c.by_session.contains(session) &&
           static_cast<int>(c.by_session.size()) + active_leases(c, session, t) < raters_;
  };
  auto grant = [&](std::size_t i, double expiry) {
    state_[i].leases[session] = expiry;
    r.status = NextStatus::kAssigned;
    r.assignment = Assignment{handle_for(clips_[i]), "/api/clip/" + handle_for(clips_[i]) + "/audio", expiry};
    return r;
  };

  for (std::size_t i = 0; i < clips_.size(); ++i) {
    auto it = state_[i].leases.find(session);
    if (it != state_[i].leases.end() && it->second > t && eligible(i)) return grant(i, it->second);
  }
  for (auto& c : state_) c.leases.erase(session);

  std::optional<std::size_t> best;
  int best_load = 0;
  bool waiting = false;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    const ClipState& c = state_[i];
    if (c.by_session.contains(session) || static_cast<int>(c.by_session.size()) >= raters_) continue;
    if (!eligible(i)) {
      waiting = true;
      continue;
    }
    const int load = static_cast<int>(c.by_session.size()) + active_leases(c, session, t);
    if (!best || load < best_load) {
      best = i;
      best_load = load;
    }
  }
  if (best) return grant(*best, t + lease_seconds_);
  r.status = waiting ? NextStatus::kWait : NextStatus::kDone;
  return r;
}

SubmitResult Campaign::submit(const std::string& session, const std::string& handle,
                              const std::vector<int>& scores) {
  std::unique_lock lock(mu_);
  SubmitResult r;
  if (!open_) {
    r.status = SubmitStatus::kClosed;
    r.message = "campaign is closed";
    return r;
  }
  if (!sessions_.contains(session)) {
    r.message = "unknown session";
    return r;
  }
  auto clip = handles_.find(handle);
  if (clip == handles_.end()) {
    r.status = SubmitStatus::kUnknownClip;
    r.message = "unknown clip handle";
    return r;
  }
  if (scores.size() != kNumActions) {
    r.message = "expected " + std::to_string(kNumActions) + " scores, got " + std::to_string(scores.size());
    return r;
  }
  std::array<std::uint8_t, kNumActions> s{};
  for (std::size_t a = 0; a < kNumActions; ++a) {
    if (scores[a] < 0 || scores[a] > kLikertMax) {
      r.message = "score for '" + std::string(ActionTaxonomy::standard().name(a)) + "' must be 0-4";
      return r;
    }
    s[a] = static_cast<std::uint8_t>(scores[a]);
  }

  ClipState& c = state_[index_.at(clip->second)];
  r.coverage = static_cast<int>(c.by_session.size());
  if (auto prev = c.by_session.find(session); prev != c.by_session.end()) {
    r.status = prev->second == s ? SubmitStatus::kDuplicate : SubmitStatus::kConflict;
    if (r.status == SubmitStatus::kConflict) r.message = "a different rating of this clip was already recorded";
    return r;
  }
  if (r.coverage >= raters_) {
    r.status = SubmitStatus::kConflict;
    r.message = "clip already has " + std::to_string(raters_) + " ratings";
    return r;
  }
  json rec = {{"type", "submit"}, {"session", session}, {"clip", clip->second}, {"scores", scores}};
  append(rec.dump());
  c.by_session.emplace(session, s);
  c.leases.erase(session);
  r.status = SubmitStatus::kAccepted;
  r.coverage = static_cast<int>(c.by_session.size());
  return r;
}

std::vector<ActionRating> Campaign::ratings() const {
  std::shared_lock lock(mu_);
  std::vector<ActionRating> out;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    for (const auto& [session, s] : state_[i].by_session) out.push_back({clips_[i], session, s});
  }
  std::sort(out.begin(), out.end(), [](const ActionRating& a, const ActionRating& b) {
    return std::tie(a.clip_id, a.annotator_id) < std::tie(b.clip_id, b.annotator_id);
  });
  return out;
}

ProgressReport Campaign::progress() const {
  const auto all = ratings();
  std::shared_lock lock(mu_);
  ProgressReport p;
  p.total_clips = clips_.size();
  p.clips_by_raters.assign(static_cast<std::size_t>(raters_) + 1, 0);
  std::set<std::string> annotators;
  for (const auto& c : state_) {
    ++p.clips_by_raters[std::min(c.by_session.size(), static_cast<std::size_t>(raters_))];
    p.submissions += c.by_session.size();
    for (const auto& kv : c.by_session) annotators.insert(kv.first);
  }
  p.annotators = annotators.size();
  p.spam_flagged = reject_spammers(all, majority_fraction_).discarded.size();
  p.complete = p.clips_by_raters.back() == p.total_clips;
  p.open = open_;
  return p;
}

std::string Campaign::export_csv() const {
  std::ostringstream out;
  write_annotations(ratings(), out);
  return out.str();
}

void Campaign::close() {
  std::unique_lock lock(mu_);
  if (!open_) return;
  append(json{{"type", "close"}}.dump());
  open_ = false;
}

bool Campaign::is_open() const {
  std::shared_lock lock(mu_);
  return open_;
}

AnnotationService::AnnotationService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.manifest.empty()) throw UsageError("service needs a campaign manifest");
  const FoldedDataset ds = load_manifest(cfg_.manifest);
  std::vector<std::string> ids;
  for (const ClipMeta& c : ds.clips()) {
    ids.push_back(c.clip_id);
    filenames_[c.clip_id] = c.filename;
  }
  Campaign::Options opts;
  opts.raters_per_clip = cfg_.raters_per_clip;
  opts.lease_seconds = cfg_.lease_seconds;
  opts.majority_fraction = cfg_.majority_fraction;
  campaigns_[cfg_.campaign_id] = std::make_unique<Campaign>(
      cfg_.campaign_id, std::move(ids), cfg_.data_dir / (cfg_.campaign_id + ".log"), opts);
}

Campaign* AnnotationService::campaign(const std::string& id) {
  auto it = campaigns_.find(id);
  return it == campaigns_.end() ? nullptr : it->second.get();
}

std::optional<std::vector<std::uint8_t>> AnnotationService::clip_audio(const std::string& handle) const {
  for (const auto& [id, c] : campaigns_) {
    auto clip = c->clip_for_handle(handle);
    if (!clip) continue;
    const std::filesystem::path path = cfg_.audio_dir / filenames_.at(*clip);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("audio for clip is missing: " + path.filename().string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    return strip_wav_metadata(bytes);
  }
  return std::nullopt;
}

}  // namespace avsec
