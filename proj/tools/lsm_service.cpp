// HTTP session server for interactive segmentation.

#include <CLI11.hpp>

#include <iostream>

#include "lsm/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Interactive segmentation session service"};
  int port = 7430;
  std::string host = "0.0.0.0";
  lsm::service::ServiceConfig cfg;
  std::size_t threads = 8;
  app.add_option("--port", port, "Listen port")->check(CLI::Range(1, 65535));
  app.add_option("--host", host, "Bind address");
  app.add_option("--allow-origin", cfg.allow_origin, "Origin allowed by CORS (e.g. http://localhost:5173)");
  app.add_option("--max-width", cfg.max_width, "Largest accepted image width")->check(CLI::PositiveNumber);
  app.add_option("--max-height", cfg.max_height, "Largest accepted image height")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  lsm::service::Service service(cfg);
  httplib::Server server;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  service.install(server);
  std::cout << "listening on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
