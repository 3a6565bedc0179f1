#include "pptdetect/label_service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace pptdetect::service {

using nlohmann::json;

namespace {

Response json_response(int status, const json& j) { return {status, "application/json", j.dump() + "\n"}; }

Response error(int status, const std::string& message) { return json_response(status, json{{"error", message}}); }

json annotation_json(const corpus::TraitAnnotation& a) {
  return json{{"urgency", a.urgency}, {"fear", a.fear}, {"desire", a.desire}, {"annotator", a.annotator},
              {"timestamp", a.timestamp}};
}

std::string preview(const std::string& body) {
  std::u32string cps = utf8_decode(body);
  if (cps.size() <= 200) return body;
  return utf8_encode(std::u32string_view(cps).substr(0, 200));
}

}  // namespace

struct LabelService::Server {
  httplib::Server http;
};

LabelService::LabelService(pipeline::Workspace& workspace) : ws_(workspace) {
  records_ = ws_.load_records();
  for (const auto& r : records_) by_id_[r.id] = &r;
  sample_ = ws_.load_sample();
  sampled_.insert(sample_.begin(), sample_.end());
  labels_ = ws_.load_labels();
  for (const auto& a : labels_) last_timestamp_ = std::max(last_timestamp_, a.timestamp);
}

std::vector<corpus::TraitAnnotation> LabelService::current() const { return corpus::current_per_email(labels_); }

Response LabelService::handle(const std::string& method, const std::string& path,
                              const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    const std::string prefix = "/api/emails";
    if (path == prefix || path == prefix + "/") {
      if (method != "GET") return error(405, "method not allowed");
      return list(query);
    }
    if (path.rfind(prefix + "/", 0) == 0) {
      std::string rest = path.substr(prefix.size() + 1);
      const std::string suffix = "/traits";
      if (rest.size() > suffix.size() && rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
        if (method != "PUT") return error(405, "method not allowed");
        return put_traits(rest.substr(0, rest.size() - suffix.size()), body);
      }
      if (rest.find('/') != std::string::npos) return error(404, "no such endpoint");
      if (method != "GET") return error(405, "method not allowed");
      return get_one(rest);
    }
    if (path == "/api/progress") {
      if (method != "GET") return error(405, "method not allowed");
      return progress();
    }
    if (path == "/api/export") {
      if (method != "GET") return error(405, "method not allowed");
      return export_csv();
    }
    return error(404, "no such endpoint");
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response LabelService::list(const std::map<std::string, std::string>& query) {
  std::string status = "all";
  if (auto it = query.find("status"); it != query.end()) status = it->second;
  if (status != "all" && status != "unlabeled" && status != "labeled") {
    return error(400, "status must be one of unlabeled, labeled, all");
  }
  std::size_t limit = sample_.size();
  if (auto it = query.find("limit"); it != query.end()) {
    try {
      double v = parse_double(it->second);
      if (v < 0 || v != std::floor(v)) throw ParseError("");
      limit = static_cast<std::size_t>(v);
    } catch (const ParseError&) {
      return error(400, "limit must be a non-negative integer");
    }
  }
  std::lock_guard lock(mutex_);
  std::map<std::string, corpus::TraitAnnotation> labeled;
  for (auto& a : current()) labeled[a.email_id] = a;
  json tasks = json::array();
  std::size_t matching = 0;
  for (const auto& id : sample_) {
    auto it = labeled.find(id);
    bool is_labeled = it != labeled.end();
    if ((status == "unlabeled" && is_labeled) || (status == "labeled" && !is_labeled)) continue;
    ++matching;
    if (tasks.size() >= limit) continue;
    const auto* rec = by_id_.count(id) ? by_id_.at(id) : nullptr;
    tasks.push_back({{"email_id", id},
                     {"preview", rec ? preview(rec->body) : std::string()},
                     {"status", is_labeled ? "LABELED" : "UNLABELED"},
                     {"annotation", is_labeled ? annotation_json(it->second) : json(nullptr)}});
  }
  return json_response(200, json{{"tasks", tasks}, {"matching", matching}, {"total", sample_.size()}});
}

Response LabelService::get_one(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto rec = by_id_.find(id);
  if (rec == by_id_.end()) return error(404, "unknown email id '" + id + "'");
  if (!sampled_.count(id)) return error(409, "email '" + id + "' is not in the labeling sample");
  json out{{"email_id", id}, {"body", rec->second->body}, {"status", "UNLABELED"}, {"annotation", nullptr}};
  for (const auto& a : current()) {
    if (a.email_id == id) {
      out["status"] = "LABELED";
      out["annotation"] = annotation_json(a);
    }
  }
  auto pos = std::find(sample_.begin(), sample_.end(), id);
  out["position"] = static_cast<std::size_t>(pos - sample_.begin()) + 1;
  out["total"] = sample_.size();
  return json_response(200, out);
}

Response LabelService::put_traits(const std::string& id, const std::string& body) {
  {
    std::lock_guard lock(mutex_);
    if (!by_id_.count(id)) return error(404, "unknown email id '" + id + "'");
    if (!sampled_.count(id)) return error(409, "email '" + id + "' is not in the labeling sample");
  }
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception&) {
    return error(400, "request body is not valid JSON");
  }
  if (!j.is_object()) return error(400, "request body must be a JSON object");
  corpus::TraitAnnotation a;
  a.email_id = id;
  for (Trait t : kAllTraits) {
    std::string name(trait_name(t));
    if (!j.contains(name)) return error(400, "missing trait '" + name + "'");
    const auto& v = j[name];
    int value = -1;
    if (v.is_number_integer()) value = v.get<int>();
    else if (v.is_boolean()) value = v.get<bool>() ? 1 : 0;
    if (value != 0 && value != 1) return error(400, "trait '" + name + "' must be 0 or 1");
    (t == Trait::kUrgency ? a.urgency : t == Trait::kFear ? a.fear : a.desire) = value;
  }
  a.annotator = "annotator";
  if (j.contains("annotator")) {
    if (!j["annotator"].is_string() || j["annotator"].get<std::string>().empty()) {
      return error(400, "annotator must be a non-empty string");
    }
    a.annotator = j["annotator"].get<std::string>();
  }
  std::lock_guard lock(mutex_);
  auto now = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  // Strictly increasing so the latest write always wins.
  a.timestamp = std::max<std::int64_t>(now, last_timestamp_ + 1);
  auto updated = labels_;
  updated.erase(std::remove_if(updated.begin(), updated.end(),
                               [&](const auto& x) { return x.email_id == id && x.annotator == a.annotator; }),
                updated.end());
  updated.push_back(a);
  ws_.save_labels(updated);
  labels_ = std::move(updated);
  last_timestamp_ = a.timestamp;
  return json_response(200, json{{"email_id", id}, {"status", "LABELED"}, {"annotation", annotation_json(a)}});
}

Response LabelService::progress() {
  std::lock_guard lock(mutex_);
  std::vector<corpus::TraitAnnotation> in_sample;
  for (auto& a : current())
    if (sampled_.count(a.email_id)) in_sample.push_back(a);
  json out{{"labeled", in_sample.size()}, {"total", sample_.size()}};
  out["percent"] = sample_.empty() ? 0.0 : 100.0 * static_cast<double>(in_sample.size()) / static_cast<double>(sample_.size());
  if (in_sample.empty()) {
    out["marginals"] = {{"urgency", nullptr}, {"fear", nullptr}, {"desire", nullptr}};
    out["urgency_and_fear"] = nullptr;
    out["all_three"] = nullptr;
  } else {
    auto s = corpus::summarize_labels(in_sample);
    out["marginals"] = {{"urgency", s.urgency_marginal}, {"fear", s.fear_marginal}, {"desire", s.desire_marginal}};
    out["urgency_and_fear"] = s.urgency_and_fear;
    out["all_three"] = s.all_three;
    out["summary"] = s.describe();
  }
  return json_response(200, out);
}

Response LabelService::export_csv() {
  std::lock_guard lock(mutex_);
  return {200, "text/csv", corpus::format_trait_labels(labels_)};
}

int LabelService::bind(const std::string& host, int port) {
  auto server = std::make_shared<Server>();
  {
    std::lock_guard lock(mutex_);
    server_ = server;
  }
  auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    Response r = handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server->http.Get(R"(/api/.*)", bridge);
  server->http.Put(R"(/api/.*)", bridge);
  server->http.Post(R"(/api/.*)", bridge);
  server->http.Delete(R"(/api/.*)", bridge);
  int p = port == 0 ? server->http.bind_to_any_port(host) : (server->http.bind_to_port(host, port) ? port : -1);
  if (p < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  bound_port_ = p;
  return p;
}

void LabelService::listen() {
  std::shared_ptr<Server> s;
  {
    std::lock_guard lock(mutex_);
    s = server_;
  }
  if (!s) throw Error("label service is not bound");
  s->http.listen_after_bind();
}

bool LabelService::listening() const {
  std::lock_guard lock(mutex_);
  return server_ && server_->http.is_running();
}

void LabelService::stop() {
  std::shared_ptr<Server> s;
  {
    std::lock_guard lock(mutex_);
    s = server_;
  }
  if (s) s->http.stop();
}

}  // namespace pptdetect::service
