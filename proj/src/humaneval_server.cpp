#include "alignreid/humaneval_server.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "alignreid/image.hpp"
#include "alignreid/png.hpp"

namespace areid::humaneval {

using json = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

std::string image_url(const std::string& ref) { return "/images/" + ref; }

class PngCache {
 public:
  explicit PngCache(const Study& study) : study_(study) {}

  // Empty when the ref is unknown.
  std::shared_ptr<const std::string> get(const std::string& ref) {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(ref); it != cache_.end()) return it->second;
    const auto path = study_.images.find(ref);
    if (path == study_.images.end()) return nullptr;
    const auto bytes = encode_png(load_image(path->second));
    auto png = std::make_shared<const std::string>(bytes.begin(), bytes.end());
    cache_[ref] = png;
    return png;
  }

 private:
  const Study& study_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const std::string>> cache_;
};

}  // namespace

void install_routes(httplib::Server& server, const Study& study, AnswerStore& store,
                    const ServerOptions& options) {
  auto pngs = std::make_shared<PngCache>(study);

  server.Get(R"(/api/annotator/([^/]+)/next)",
             [&study, &store](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               if (!study.has_annotator(id)) return send_error(res, 404, "unknown annotator " + id);
               const auto next = store.next(id);
               if (!next) return send_json(res, 200, {{"done", true}, {"total", study.items.size()}});
               json candidates = json::array();
               for (const auto& r : next->candidates) candidates.push_back(image_url(r));
               send_json(res, 200,
                         {{"done", false},
                          {"item", next->item},
                          {"position", next->position},
                          {"total", next->total},
                          {"query", image_url(next->query)},
                          {"candidates", candidates}});
             });

  server.Post(R"(/api/annotator/([^/]+)/answer)",
              [&study, &store](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                if (!study.has_annotator(id)) return send_error(res, 404, "unknown annotator " + id);
                std::size_t item = 0;
                std::optional<std::size_t> chosen;
                try {
                  const json body = json::parse(req.body);
                  item = body.at("item").get<std::size_t>();
                  const auto& c = body.at("chosen");
                  if (!c.is_null()) chosen = c.get<std::size_t>();
                } catch (const json::exception& e) {
                  return send_error(res, 400, std::string("bad answer body: ") + e.what());
                }
                switch (store.record(id, item, chosen)) {
                  case RecordStatus::kRecorded:
                    return send_json(res, 200, {{"recorded", true}, {"item", item}});
                  case RecordStatus::kDuplicate:
                    return send_error(res, 409, "item " + std::to_string(item) + " already answered");
                  case RecordStatus::kUnknownAnnotator:
                    return send_error(res, 404, "unknown annotator " + id);
                  case RecordStatus::kUnknownItem:
                    return send_error(res, 404, "unknown item " + std::to_string(item));
                  case RecordStatus::kOutOfRange:
                    return send_error(res, 400, "chosen index out of range");
                }
              });

  server.Get("/api/report", [&store](const httplib::Request&, httplib::Response& res) {
    try {
      res.status = 200;
      res.set_content(store.report().to_json(), "application/json");
    } catch (const ProtocolError&) {
      send_json(res, 200, {{"per_annotator", json::object()}, {"best", nullptr}});
    }
  });

  server.Get(R"(/images/([A-Za-z0-9_]+))",
             [pngs](const httplib::Request& req, httplib::Response& res) {
               std::shared_ptr<const std::string> png;
               try {
                 png = pngs->get(req.matches[1]);
               } catch (const std::exception& e) {
                 return send_error(res, 500, e.what());
               }
               if (!png) return send_error(res, 404, "unknown image");
               res.status = 200;
               res.set_content(*png, "image/png");
             });

  if (!options.static_dir.empty()) {
    if (!server.set_mount_point("/", options.static_dir.string())) {
      throw std::runtime_error("cannot serve static files from " + options.static_dir.string());
    }
  }
}

}  // namespace areid::humaneval
