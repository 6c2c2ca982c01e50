#include "omtube/cli.hpp"
#include "omtube/parallel.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace omtube;
  configure_workers_from_env();
  cli::RunConfig config;
  try {
    if (!cli::parse(argc, argv, config, std::cout)) return cli::ok;
    return cli::run(config, std::cout);
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nrun with --help for options\n";
    return cli::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::failure;
  }
}
