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

#include <sstream>

#include "avsec/error.hpp"
#include "avsec/service.hpp"
#include "support/synthetic.hpp"

using namespace avsec;

namespace {

struct FakeClock {
  double t = 1000.0;
  Campaign::Clock fn() {
    return [this] { return t; };
  }
};

Campaign::Options opts(FakeClock& clock, int raters = 3) {
  Campaign::Options o;
  o.raters_per_clip = raters;
  o.lease_seconds = 60;
  o.clock = clock.fn();
  o.secret = "fixed";
  return o;
}

std::vector<int> scores(int v) { return std::vector<int>(kNumActions, v); }

std::vector<int> varied(int seed) {
  std::vector<int> s(kNumActions);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<int>((i + static_cast<std::size_t>(seed)) % 3);
  return s;
}

}  // namespace

TEST_CASE("assignment and submission") {
  testing::TempDir dir;
  FakeClock clock;
  Campaign c("t", {"c1", "c2"}, dir / "t.log", opts(clock, 2));
  const std::string s = c.open_session({{"headphones", true}});
  const NextResult n = c.next(s);
  REQUIRE(n.status == NextStatus::kAssigned);
  const Assignment a = *n.assignment;
  CHECK(a.handle.size() == 24);
  CHECK(a.handle.find("c1") == std::string::npos);
  CHECK(a.audio_url == "/api/clip/" + a.handle + "/audio");
  CHECK(a.lease_expires == 1060.0);
  CHECK(c.clip_for_handle(a.handle).has_value());
  CHECK(c.next(s).assignment->handle == a.handle);  // lease is sticky

  CHECK(c.submit(s, a.handle, varied(1)).status == SubmitStatus::kAccepted);
  CHECK(c.submit(s, a.handle, varied(1)).status == SubmitStatus::kDuplicate);
  CHECK(c.submit(s, a.handle, varied(2)).status == SubmitStatus::kConflict);
  CHECK(c.submit(s, a.handle, scores(5)).status == SubmitStatus::kInvalid);
  CHECK(c.submit(s, a.handle, std::vector<int>(19, 0)).status == SubmitStatus::kInvalid);
  CHECK(c.submit(s, "nope", varied(1)).status == SubmitStatus::kUnknownClip);
  CHECK(c.submit("ghost", a.handle, varied(1)).status == SubmitStatus::kInvalid);
  CHECK_THROWS_AS(c.next("ghost"), UsageError);

  const NextResult second = c.next(s);
  REQUIRE(second.status == NextStatus::kAssigned);
  CHECK(second.assignment->handle != a.handle);
  CHECK(c.submit(s, second.assignment->handle, varied(3)).status == SubmitStatus::kAccepted);
  CHECK(c.next(s).status == NextStatus::kDone);
}

TEST_CASE("coverage cap, leases and progress partition") {
  testing::TempDir dir;
  FakeClock clock;
  Campaign c("t", {"c1"}, dir / "t.log", opts(clock, 2));
  const std::string s1 = c.open_session(), s2 = c.open_session(), s3 = c.open_session();
  const std::string h = c.next(s1).assignment->handle;
  CHECK(c.next(s2).status == NextStatus::kAssigned);
  CHECK(c.next(s3).status == NextStatus::kWait);  // both slots leased
  clock.t += 61;                                   // s1 and s2 leases lapse
  CHECK(c.next(s3).status == NextStatus::kAssigned);
  CHECK(c.submit(s1, h, varied(0)).status == SubmitStatus::kAccepted);
  CHECK(c.submit(s3, h, varied(1)).status == SubmitStatus::kAccepted);
  const SubmitResult over = c.submit(s2, h, varied(2));
  CHECK(over.status == SubmitStatus::kConflict);
  CHECK(over.coverage == 2);
  CHECK(c.next(s2).status == NextStatus::kDone);

  const ProgressReport p = c.progress();
  CHECK(p.total_clips == 1);
  CHECK(p.clips_by_raters == std::vector<std::size_t>{0, 0, 1});
  CHECK(p.submissions == 2);
  CHECK(p.annotators == 2);
  CHECK(p.complete);
}

TEST_CASE("progress counts spam") {
  testing::TempDir dir;
  FakeClock clock;
  Campaign c("t", {"a", "b", "d"}, dir / "t.log", opts(clock));
  const std::string s = c.open_session();
  for (int i = 0; i < 3; ++i) {
    const auto n = c.next(s);
    c.submit(s, n.assignment->handle, i == 0 ? scores(4) : varied(i));
  }
  const ProgressReport p = c.progress();
  CHECK(p.spam_flagged == 1);
  CHECK(p.clips_by_raters == std::vector<std::size_t>{0, 3, 0, 0});
  std::size_t sum = 0;
  for (auto n : p.clips_by_raters) sum += n;
  CHECK(sum == p.total_clips);
  CHECK_FALSE(p.complete);
}

TEST_CASE("log replay restores state and handles") {
  testing::TempDir dir;
  FakeClock clock;
  std::string exported, handle, session;
  {
    Campaign::Options o = opts(clock);
    o.secret.reset();
    Campaign c("t", {"c1", "c2", "c3"}, dir / "t.log", o);
    session = c.open_session();
    handle = c.next(session).assignment->handle;
    c.submit(session, handle, varied(4));
    exported = c.export_csv();
  }
  Campaign::Options o = opts(clock);
  o.secret.reset();
  Campaign again("t", {"c1", "c2", "c3"}, dir / "t.log", o);
  CHECK(again.export_csv() == exported);
  CHECK(again.clip_for_handle(handle).has_value());
  CHECK(again.submit(session, handle, varied(4)).status == SubmitStatus::kDuplicate);

  std::istringstream in(exported);
  const auto rows = read_annotations(in);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].annotator_id == session);
  CHECK(rows[0].scores[1] == 2);

  CHECK_THROWS_AS(Campaign("other", {"c1", "c2", "c3"}, dir / "t.log", opts(clock)), DataError);
  CHECK_THROWS_AS(Campaign("t", {"c1", "c2", "c3"}, dir / "t.log", opts(clock, 5)), DataError);
}

TEST_CASE("a torn final record is dropped on reopen") {
  testing::TempDir dir;
  FakeClock clock;
  {
    Campaign c("t", {"c1"}, dir / "t.log", opts(clock));
    const std::string s = c.open_session();
    c.submit(s, c.next(s).assignment->handle, varied(0));
  }
  const std::string before = testing::read_text(dir / "t.log");
  testing::write_text(dir / "t.log", before + "{\"type\":\"submit\",\"sess");
  Campaign c("t", {"c1"}, dir / "t.log", opts(clock));
  CHECK(c.ratings().size() == 1);
  CHECK(testing::read_text(dir / "t.log").substr(0, before.size()) == before);
  CHECK(c.progress().submissions == 1);
}

TEST_CASE("closing a campaign") {
  testing::TempDir dir;
  FakeClock clock;
  Campaign c("t", {"c1"}, dir / "t.log", opts(clock));
  const std::string s = c.open_session();
  const std::string h = c.next(s).assignment->handle;
  c.close();
  CHECK_FALSE(c.is_open());
  CHECK(c.submit(s, h, varied(0)).status == SubmitStatus::kClosed);
  CHECK(c.next(s).status == NextStatus::kDone);
  Campaign again("t", {"c1"}, dir / "t.log", opts(clock));
  CHECK_FALSE(again.is_open());
  CHECK_FALSE(again.progress().open);
}

TEST_CASE("service configuration") {
  const Settings s = Settings::from_string("[service]\nport = 9001\nraters_per_clip = 2\ncampaign = \"x\"\n", "t",
                                           [](const std::string&) { return std::nullopt; });
  const ServiceConfig c = service_config_from(s);
  CHECK(c.port == 9001);
  CHECK(c.raters_per_clip == 2);
  CHECK(c.campaign_id == "x");
  CHECK(c.host == "127.0.0.1");
  const Settings bad = Settings::from_string("[service]\nport = 70000\n", "t",
                                             [](const std::string&) { return std::nullopt; });
  CHECK_THROWS_AS(service_config_from(bad), UsageError);
  CHECK(submit_status_name(SubmitStatus::kUnknownClip) == "unknown_clip");
}
