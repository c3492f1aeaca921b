// Test double for an external candidate generator.
//   candidate_stub [--mode echo|malformed|silent|short|wrongstart] [--socket PATH]
// echo: candidate i is the straight line from q to g with joint 0 bent by
// 0.05 i sin(pi s). With --socket, serves one connection on PATH.
#include "json.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>

using Json = nlohmann::json;

namespace {

std::string reply(const Json& req, const std::string& mode) {
  const std::string id = req.at("id");
  const auto q = req.at("q").get<std::vector<double>>();
  const auto g = req.at("g").get<std::vector<double>>();
  const int n = req.at("N"), t = req.at("T");
  if (mode == "silent") {
    std::this_thread::sleep_for(std::chrono::seconds(30));
    return "";
  }
  if (mode == "malformed") return "{not json\n";
  std::string out;
  const int count = mode == "short" ? n - 1 : n;
  for (int i = 0; i < count; ++i) {
    Json traj = Json::array();
    for (int k = 0; k < t; ++k) {
      const double s = t > 1 ? double(k) / (t - 1) : 0.0;
      std::vector<double> w(q.size());
      for (std::size_t j = 0; j < q.size(); ++j) w[j] = (1.0 - s) * q[j] + s * g[j];
      w[0] += 0.05 * i * std::sin(M_PI * s);
      if (mode == "wrongstart" && k == 0) w[1] += 0.5;
      traj.push_back(w);
    }
    out += Json{{"id", id}, {"index", i}, {"traj", traj}}.dump() + "\n";
  }
  out += Json{{"id", id}, {"done", true}}.dump() + "\n";
  return out;
}

void serve(int in, int out, const std::string& mode) {
  std::string buf;
  char chunk[65536];
  for (;;) {
    const ssize_t n = ::read(in, chunk, sizeof chunk);
    if (n <= 0) return;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      const std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      const std::string r = reply(Json::parse(line), mode);
      std::size_t off = 0;
      while (off < r.size()) {
        const ssize_t w = ::write(out, r.data() + off, r.size() - off);
        if (w <= 0) return;
        off += static_cast<std::size_t>(w);
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = "echo", socket_path;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string a = argv[i];
    if (a == "--mode") mode = argv[i + 1];
    else if (a == "--socket") socket_path = argv[i + 1];
  }
  if (socket_path.empty()) {
    serve(STDIN_FILENO, STDOUT_FILENO, mode);
    return 0;
  }
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, socket_path.c_str(), sizeof addr.sun_path - 1);
  ::unlink(socket_path.c_str());
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 1) != 0) {
    std::perror("candidate_stub");
    return 1;
  }
  std::printf("ready\n");
  std::fflush(stdout);
  const int conn = ::accept(fd, nullptr, nullptr);
  if (conn >= 0) serve(conn, conn, mode);
  ::unlink(socket_path.c_str());
  return 0;
}
