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

#include "avsec/http_server.hpp"

#include <httplib.h>

#include <json.hpp>

#include "avsec/error.hpp"

namespace avsec {

using json = nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

int http_status(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::kAccepted:
    case SubmitStatus::kDuplicate: return 200;
    case SubmitStatus::kConflict: return 409;
    case SubmitStatus::kInvalid: return 422;
    case SubmitStatus::kUnknownClip: return 404;
    case SubmitStatus::kClosed: return 410;
  }
  return 500;
}

json action_rows() {
  json rows = json::array();
  for (auto name : ActionTaxonomy::standard().actions()) rows.push_back(std::string(name));
  return rows;
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) { routes(); }

  Campaign* lookup(const httplib::Request& req, httplib::Response& res) {
    Campaign* c = service.campaign(req.path_params.at("id"));
    if (!c) send_error(res, 404, "unknown campaign");
    return c;
  }

  void routes() {
    server.Post("/api/campaign/:id/session", [this](const httplib::Request& req, httplib::Response& res) {
      Campaign* c = lookup(req, res);
      if (!c) return;
      std::map<std::string, bool> checklist;
      if (!req.body.empty()) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
        if (body.contains("checklist")) {
          if (!body["checklist"].is_object()) return send_error(res, 400, "checklist must be an object");
          for (const auto& [k, v] : body["checklist"].items()) {
            if (!v.is_boolean()) return send_error(res, 400, "checklist values must be booleans");
            checklist[k] = v.get<bool>();
          }
        }
      }
      send_json(res, 200, {{"session", c->open_session(checklist)}});
    });

    server.Get("/api/campaign/:id/next", [this](const httplib::Request& req, httplib::Response& res) {
      Campaign* c = lookup(req, res);
      if (!c) return;
      json body;
      std::string session = req.get_param_value("session");
      if (session.empty()) {
        session = c->open_session();
        body["session"] = session;
      }
      NextResult r;
      try {
        r = c->next(session);
      } catch (const UsageError& e) {
        return send_error(res, 400, e.what());
      }
      if (r.status == NextStatus::kAssigned) {
        body["status"] = "assigned";
        body["clip"] = r.assignment->handle;
        body["audio_url"] = r.assignment->audio_url;
        body["actions"] = action_rows();
        body["prompt"] = kRatingPrompt;
        body["scale"] = {{"min", 0}, {"max", kLikertMax}, {"min_label", "very unlikely"},
                         {"max_label", "very likely"}};
      } else if (r.status == NextStatus::kWait) {
        body["status"] = "wait";
        body["retry_after"] = 5;
      } else {
        body["status"] = "done";
      }
      send_json(res, 200, body);
    });

    server.Post("/api/campaign/:id/submit", [this](const httplib::Request& req, httplib::Response& res) {
      Campaign* c = lookup(req, res);
      if (!c) return;
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("session") ||
          !body.contains("clip") || !body.contains("scores") || !body["session"].is_string() ||
          !body["clip"].is_string() || !body["scores"].is_array()) {
        return send_error(res, 422, "expected {\"session\", \"clip\", \"scores\"[20]}");
      }
      std::vector<int> scores;
      for (const auto& v : body["scores"]) {
        if (!v.is_number_integer()) return send_error(res, 422, "scores must be integers 0-4");
        scores.push_back(v.get<int>());
      }
      const SubmitResult r = c->submit(body["session"], body["clip"], scores);
      json out = {{"status", submit_status_name(r.status)}, {"coverage", r.coverage}};
      if (!r.message.empty()) out["error"] = r.message;
      send_json(res, http_status(r.status), out);
    });

    server.Get("/api/campaign/:id/progress", [this](const httplib::Request& req, httplib::Response& res) {
      Campaign* c = lookup(req, res);
      if (!c) return;
      const ProgressReport p = c->progress();
      send_json(res, 200,
                {{"total_clips", p.total_clips},
                 {"clips_by_raters", p.clips_by_raters},
                 {"submissions", p.submissions},
                 {"annotators", p.annotators},
                 {"spam_flagged", p.spam_flagged},
                 {"raters_per_clip", c->raters_per_clip()},
                 {"complete", p.complete},
                 {"open", p.open}});
    });

    server.Get("/api/campaign/:id/export.csv", [this](const httplib::Request& req, httplib::Response& res) {
      Campaign* c = lookup(req, res);
      if (!c) return;
      const bool complete = c->progress().complete;
      res.set_header("X-Avsec-Partial", complete ? "false" : "true");
      res.set_content(c->export_csv(), "text/csv");
    });

    server.Get("/api/clip/:handle/audio", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::vector<std::uint8_t>> audio;
      try {
        audio = service.clip_audio(req.path_params.at("handle"));
      } catch (const DataError& e) {
        return send_error(res, 500, e.what());
      }
      if (!audio) return send_error(res, 404, "unknown clip");
      res.set_content(reinterpret_cast<const char*>(audio->data()), audio->size(), "audio/wav");
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    if (!service.config().ui_dir.empty()) {
      if (!server.set_mount_point("/", service.config().ui_dir.string())) {
        throw UsageError("UI directory does not exist: " + service.config().ui_dir.string());
      }
    }
  }
};

AnnotationServer::AnnotationServer(AnnotationService& service)
    : impl_(std::make_unique<Impl>(service)) {}

AnnotationServer::~AnnotationServer() = default;

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw UsageError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw UsageError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() { impl_->server.stop(); }

}  // namespace avsec
