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

#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <thread>

#include "avsec/http_server.hpp"
#include "avsec/service.hpp"
#include "avsec/wav.hpp"
#include "support/synthetic.hpp"

// After Eigen: <resolv.h> defines an _res macro.
#include <httplib.h>

using namespace avsec;
using json = nlohmann::json;

namespace {

struct LiveServer {
  testing::TempDir dir;
  FoldedDataset ds = testing::synthetic_dataset(3, 1);
  std::unique_ptr<AnnotationService> service;
  std::unique_ptr<AnnotationServer> server;
  std::thread thread;
  int port = 0;

  LiveServer() {
    {
      std::ofstream m(dir / "meta.csv");
      write_manifest(ds, m);
    }
    std::filesystem::create_directories(dir / "audio");
    for (const auto& c : ds.clips()) {
      auto bytes = encode_wav16(std::vector<double>(64, 0.1), 1, 8000);
      const std::string info("LIST\x10\x00\x00\x00INFOINAM\x04\x00\x00\x00dog\x00", 24);
      bytes.insert(bytes.begin() + 12, info.begin(), info.end());
      std::ofstream f(dir.path() / "audio" / c.filename, std::ios::binary);
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    ServiceConfig cfg;
    cfg.manifest = dir / "meta.csv";
    cfg.audio_dir = dir / "audio";
    cfg.data_dir = dir / "data";
    cfg.campaign_id = "toy";
    service = std::make_unique<AnnotationService>(cfg);
    server = std::make_unique<AnnotationServer>(*service);
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->listen(); });
  }
  ~LiveServer() {
    server->stop();
    thread.join();
  }
};

std::string scores_json(int v) { return json(std::vector<int>(kNumActions, v)).dump(); }

}  // namespace

TEST_CASE("annotation API round trip") {
  LiveServer live;
  httplib::Client cli("127.0.0.1", live.port);

  auto s = cli.Post("/api/campaign/toy/session", R"({"checklist":{"headphones":true,"quiet_room":true}})",
                    "application/json");
  REQUIRE(s);
  REQUIRE(s->status == 200);
  const std::string session = json::parse(s->body)["session"];

  std::set<std::string> handles;
  for (int i = 0; i < 3; ++i) {
    auto n = cli.Get("/api/campaign/toy/next?session=" + session);
    REQUIRE(n);
    CHECK(n->status == 200);
    for (const auto& c : live.ds.clips()) {
      CHECK(n->body.find(c.clip_id) == std::string::npos);
      CHECK(n->body.find(c.class_name) == std::string::npos);
      CHECK(n->body.find(c.filename) == std::string::npos);
    }
    const json body = json::parse(n->body);
    REQUIRE(body["status"] == "assigned");
    CHECK(body["actions"].size() == kNumActions);
    CHECK(body["actions"][0] == "dripping");
    CHECK(body["scale"]["max"] == 4);
    CHECK(body["prompt"] == kRatingPrompt);
    const std::string handle = body["clip"];
    handles.insert(handle);

    auto audio = cli.Get(body["audio_url"].get<std::string>());
    REQUIRE(audio);
    CHECK(audio->status == 200);
    CHECK(audio->get_header_value("Content-Type") == "audio/wav");
    CHECK(audio->body.find("LIST") == std::string::npos);
    CHECK(audio->body.find("dog") == std::string::npos);

    const std::string payload = R"({"session":")" + session + R"(","clip":")" + handle + R"(","scores":)" + scores_json(i == 2 ? 4 : i) + "}";
    auto sub = cli.Post("/api/campaign/toy/submit", payload, "application/json");
    REQUIRE(sub);
    CHECK(sub->status == 200);
    CHECK(json::parse(sub->body)["status"] == "accepted");
    auto again = cli.Post("/api/campaign/toy/submit", payload, "application/json");
    CHECK(json::parse(again->body)["status"] == "duplicate");
  }
  CHECK(handles.size() == 3);
  auto done = cli.Get("/api/campaign/toy/next?session=" + session);
  CHECK(json::parse(done->body)["status"] == "done");

  const std::string h = *handles.begin();
  auto conflict = cli.Post("/api/campaign/toy/submit",
                           R"({"session":")" + session + R"(","clip":")" + h + R"(","scores":)" + scores_json(3) + "}",
                           "application/json");
  CHECK(conflict->status == 409);
  auto invalid = cli.Post("/api/campaign/toy/submit",
                          R"({"session":")" + session + R"(","clip":")" + h + R"(","scores":[1,2]})", "application/json");
  CHECK(invalid->status == 422);
  auto junk = cli.Post("/api/campaign/toy/submit", "not json", "application/json");
  CHECK(junk->status == 422);
  auto unknown = cli.Post("/api/campaign/toy/submit",
                          R"({"session":")" + session + R"(","clip":"ffff","scores":)" + scores_json(0) + "}",
                          "application/json");
  CHECK(unknown->status == 404);
  CHECK(cli.Get("/api/campaign/nope/progress")->status == 404);
  CHECK(cli.Get("/api/clip/ffff/audio")->status == 404);
  CHECK(cli.Get("/api/campaign/toy/next?session=bogus")->status == 400);

  auto auto_session = cli.Get("/api/campaign/toy/next");
  CHECK(json::parse(auto_session->body).contains("session"));

  auto progress = cli.Get("/api/campaign/toy/progress");
  const json p = json::parse(progress->body);
  CHECK(p["total_clips"] == 3);
  CHECK(p["submissions"] == 3);
  CHECK(p["clips_by_raters"] == json::array({0, 3, 0, 0}));
  CHECK(p["complete"] == false);
  CHECK(p["spam_flagged"] == 1);  // the all-4 rating

  auto csv = cli.Get("/api/campaign/toy/export.csv");
  CHECK(csv->get_header_value("X-Avsec-Partial") == "true");
  std::istringstream in(csv->body);
  const auto rows = read_annotations(in);
  CHECK(rows.size() == 3);
  for (const auto& r : rows) CHECK(live.ds.find(r.clip_id) != nullptr);
}
