#include <cstdlib>
#include <iostream>
#include <string>

#include "prosody_mi/error.hpp"
#include "synthetic_corpus.hpp"

// Usage: make_synthetic_corpus <dir> [seed] [n_utterances]
int main(int argc, char** argv) {
  if (argc < 2 || argc > 4) {
    std::cerr << "usage: make_synthetic_corpus <dir> [seed] [n_utterances]\n";
    return 2;
  }
  prosody_mi::cli::SyntheticCorpusOptions opt;
  try {
    if (argc > 2) opt.seed = std::stoull(argv[2]);
    if (argc > 3) opt.n_utterances = std::stoi(argv[3]);
    const auto config = prosody_mi::cli::write_synthetic_corpus(argv[1], opt);
    std::cout << config.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
