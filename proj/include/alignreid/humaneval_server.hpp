#pragma once

#include <filesystem>

#include "alignreid/humaneval.hpp"

namespace httplib {
class Server;
}

namespace areid::humaneval {

struct ServerOptions {
  std::filesystem::path static_dir;  // UI assets mounted at /, optional
};

// Registers the annotation API on `server`:
//   GET  /api/annotator/{id}/next    next unanswered item, candidates shuffled
//   POST /api/annotator/{id}/answer  {"item": n, "chosen": k | null}
//   GET  /api/report                 per-annotator rank-1 and the best
//   GET  /images/{ref}               PNG bytes
// Ground-truth flags never appear in a response. `study` and `store` must
// outlive the server.
void install_routes(httplib::Server& server, const Study& study, AnswerStore& store,
                    const ServerOptions& options = {});

}  // namespace areid::humaneval
