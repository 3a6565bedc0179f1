#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "pptdetect/corpus.hpp"
#include "pptdetect/pipeline.hpp"

namespace pptdetect::service {

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Backend of the annotation UI. Labels live in the workspace label store and
/// every accepted PUT is on disk before the response is produced.
class LabelService {
 public:
  explicit LabelService(pipeline::Workspace& workspace);

  Response handle(const std::string& method, const std::string& path,
                  const std::map<std::string, std::string>& query, const std::string& body);

  /// Binds the HTTP listener; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves requests on the bound listener until stop() is called.
  void listen();
  void serve(const std::string& host, int port) {
    bind(host, port);
    listen();
  }
  void stop();
  int bound_port() const { return bound_port_.load(); }
  bool listening() const;

 private:
  Response list(const std::map<std::string, std::string>& query);
  Response get_one(const std::string& id);
  Response put_traits(const std::string& id, const std::string& body);
  Response progress();
  Response export_csv();
  std::vector<corpus::TraitAnnotation> current() const;

  pipeline::Workspace& ws_;
  std::map<std::string, const corpus::EmailRecord*> by_id_;
  std::vector<corpus::EmailRecord> records_;
  std::vector<std::string> sample_;
  std::set<std::string> sampled_;
  std::vector<corpus::TraitAnnotation> labels_;
  std::int64_t last_timestamp_ = 0;
  mutable std::mutex mutex_;
  struct Server;
  std::shared_ptr<Server> server_;
  std::atomic<int> bound_port_{0};
};

}  // namespace pptdetect::service
