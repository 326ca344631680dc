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

#ifndef AVSEC_HTTP_SERVER_HPP_
#define AVSEC_HTTP_SERVER_HPP_

#include <memory>
#include <string>

#include "avsec/service.hpp"

namespace avsec {

// HTTP/JSON front end for an AnnotationService:
//   POST /api/campaign/:id/session       {"checklist": {...}} -> {"session"}
//   GET  /api/campaign/:id/next?session= -> assignment | done | wait
//   POST /api/campaign/:id/submit        {"session", "clip", "scores"[20]}
//   GET  /api/campaign/:id/progress
//   GET  /api/campaign/:id/export.csv
//   GET  /api/clip/:handle/audio         WAV without metadata chunks
// plus the UI bundle mounted at "/" when ui_dir is set.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service);
  ~AnnotationServer();

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace avsec

#endif  // AVSEC_HTTP_SERVER_HPP_
