#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <vector>

#include "cbmrul/app/config.hpp"
#include "cbmrul/app/intervene.hpp"
#include "cbmrul/data/fleet.hpp"
#include "cbmrul/model/train.hpp"

namespace cbmrul::app {

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;
};

/// JSON API over read-only models and units plus in-memory operator sessions.
/// handle() is safe to call from many threads.
class Service {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  struct NamedModel {
    std::string name;
    model::Model model;
  };

  Service(std::vector<NamedModel> models, const std::vector<data::UnitTrajectory>& units,
          const data::PreprocessOptions& preprocess,
          std::chrono::seconds session_ttl = std::chrono::hours(1), Clock clock = {},
          double detection_threshold = 0.5);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ApiResponse handle(const ApiRequest& request);
  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Loads checkpoints and the configured split from disk.
std::unique_ptr<Service> make_service(const ExperimentConfig& config);

/// Blocks serving `service` over HTTP until `stop` is requested.
void serve(Service& service, const std::string& host, int port, const std::string& cors_origin,
           std::stop_token stop = {});

}  // namespace cbmrul::app
