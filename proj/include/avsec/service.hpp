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

#ifndef AVSEC_SERVICE_HPP_
#define AVSEC_SERVICE_HPP_

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "avsec/annotation.hpp"
#include "avsec/config.hpp"

namespace avsec {

inline constexpr const char* kRatingPrompt =
    "For each action below, judge how likely it is to have produced at least part of the "
    "sound event.";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "avsec-data";
  std::filesystem::path manifest;
  std::filesystem::path audio_dir;
  std::filesystem::path ui_dir;  // static bundle; not mounted when empty
  std::string campaign_id = "esc50";
  int raters_per_clip = 3;
  double lease_seconds = 600.0;
  double majority_fraction = 0.8;
};

// [service] section: host, port, data_dir, manifest, audio_dir, ui_dir,
// campaign, raters_per_clip, lease_seconds, majority_fraction.
ServiceConfig service_config_from(const Settings& s, ServiceConfig base = {});

struct Assignment {
  std::string handle;  // opaque per-campaign clip handle
  std::string audio_url;
  double lease_expires = 0.0;
};

enum class NextStatus { kAssigned, kDone, kWait };

struct NextResult {
  NextStatus status = NextStatus::kDone;
  std::optional<Assignment> assignment;
};

enum class SubmitStatus { kAccepted, kDuplicate, kConflict, kInvalid, kUnknownClip, kClosed };
std::string_view submit_status_name(SubmitStatus s);

struct SubmitResult {
  SubmitStatus status = SubmitStatus::kInvalid;
  std::string message;
  int coverage = 0;  // submissions now held by the clip
};

struct ProgressReport {
  std::size_t total_clips = 0;
  std::vector<std::size_t> clips_by_raters;  // index = raters so far, 0..required
  std::size_t submissions = 0;
  std::size_t annotators = 0;
  std::size_t spam_flagged = 0;  // ratings reject_spammers would discard
  bool complete = false;
  bool open = true;
};

// One rating campaign over a fixed clip list, persisted as an append-only
// JSON-lines log. Reopening replays the log; a torn final line is ignored.
class Campaign {
 public:
  using Clock = std::function<double()>;  // seconds

  struct Options {
    int raters_per_clip = 3;
    double lease_seconds = 600.0;
    double majority_fraction = 0.8;
    Clock clock;                  // defaults to steady_clock
    std::optional<std::string> secret;  // handle salt for a new log
  };

  Campaign(std::string id, std::vector<std::string> clip_ids, std::filesystem::path log_path,
           Options opts);
  ~Campaign();
  Campaign(const Campaign&) = delete;
  Campaign& operator=(const Campaign&) = delete;

  const std::string& id() const { return id_; }
  int raters_per_clip() const { return raters_; }

  // New opaque session token; the self-report checklist is logged with it.
  std::string open_session(const std::map<std::string, bool>& checklist = {});

  NextResult next(const std::string& session);
  SubmitResult submit(const std::string& session, const std::string& handle,
                      const std::vector<int>& scores);
  ProgressReport progress() const;
  std::string export_csv() const;
  std::vector<ActionRating> ratings() const;  // sorted by (clip_id, annotator_id)
  void close();
  bool is_open() const;

  std::string handle_for(const std::string& clip_id) const;
  std::optional<std::string> clip_for_handle(const std::string& handle) const;

 private:
  struct ClipState {
    std::map<std::string, std::array<std::uint8_t, kNumActions>> by_session;
    std::map<std::string, double> leases;  // session -> expiry
  };

  void replay();
  void append(const std::string& line);
  double now() const;
  int active_leases(const ClipState& c, const std::string& except, double t) const;

  std::string id_;
  std::vector<std::string> clips_;
  std::filesystem::path log_path_;
  int raters_;
  double lease_seconds_;
  double majority_fraction_;
  Clock clock_;
  std::string secret_;
  bool open_ = true;

  std::map<std::string, std::size_t> index_;  // clip_id -> position
  std::map<std::string, std::string> handles_;  // handle -> clip_id
  std::vector<ClipState> state_;
  std::set<std::string> sessions_;

  mutable std::shared_mutex mu_;
  std::mutex log_mu_;
  std::FILE* log_ = nullptr;
};

// Campaigns plus the audio directory they serve from.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig cfg);

  const ServiceConfig& config() const { return cfg_; }
  Campaign* campaign(const std::string& id);
  // Clip audio with metadata chunks removed, looked up by handle across
  // campaigns. Empty when the handle is unknown.
  std::optional<std::vector<std::uint8_t>> clip_audio(const std::string& handle) const;

 private:
  ServiceConfig cfg_;
  std::map<std::string, std::unique_ptr<Campaign>> campaigns_;
  std::map<std::string, std::string> filenames_;  // clip_id -> filename
};

}  // namespace avsec

#endif  // AVSEC_SERVICE_HPP_
