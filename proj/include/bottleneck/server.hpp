#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bottleneck/env.hpp"
#include "bottleneck/policy.hpp"

namespace bottleneck {

inline constexpr int kProtocolVersion = 1;

/// One client's view of an environment. Every request line yields exactly
/// one reply line; bad input produces {"error": ...} and leaves the session
/// usable.
class EnvSession {
public:
    explicit EnvSession(EpisodeConfig cfg);

    std::string hello() const;
    /// Returns the reply; sets `closed` when the client asked to close.
    std::string handle(const std::string& line, bool& closed);

private:
    EpisodeConfig base_;
    std::unique_ptr<BottleneckEnv> env_;
};

/// Serialises an env result as a protocol reply.
std::string encode_result(const EnvResult& r);

/// Serves sessions over stdin/stdout until close or EOF.
void serve_stdio(std::istream& in, std::ostream& out, const EpisodeConfig& cfg);

/// Listens on `port` (0 = any free port). One thread per connection.
class TcpServer {
public:
    TcpServer() = default;
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    /// Binds and starts accepting in the background; returns the bound port.
    int start_env(int port, const EpisodeConfig& cfg, const std::string& host = "127.0.0.1");
    /// Same, but answers policy "act" requests with `policy` (shared, serialised).
    int start_policy(int port, std::shared_ptr<Policy> policy, const std::string& host = "127.0.0.1");
    /// Blocks until stop() is called from elsewhere.
    void wait();
    void stop();

private:
    int listen_on(int port, const std::string& host);
    void accept_loop(const std::function<void(int)>& handler);

    int fd_ = -1;
    std::atomic<bool> running_{false};
    std::unique_ptr<std::thread> thread_;
    std::vector<std::thread> sessions_;
    std::vector<int> conns_;
    std::mutex mu_;
};

namespace wire {
/// Blocking helpers over a connected socket.
bool read_line(int fd, std::string& buffer, std::string& line);
bool write_line(int fd, const std::string& line);
int connect_to(const std::string& endpoint);
} // namespace wire

} // namespace bottleneck
