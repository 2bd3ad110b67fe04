// Writes a synthetic traffic corpus and a matching entity dictionary.
#include <iostream>

#include "CLI11.hpp"
#include "fcaccel/util.hpp"
#include "fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic music-assistant traffic"};
  fixtures::CorpusOptions options;
  std::string out = "corpus.jsonl";
  std::string dict = "entities.tsv";
  app.add_option("--records", options.records);
  app.add_option("--seed", options.seed);
  app.add_option("--complex-share", options.complex_share);
  app.add_option("--typo-share", options.typo_share);
  app.add_option("--output", out);
  app.add_option("--dictionary", dict);
  CLI11_PARSE(app, argc, argv);
  fcaccel::write_file_atomic(out, fixtures::to_jsonl(fixtures::synthetic_corpus(options)));
  fcaccel::write_file_atomic(dict, fixtures::dictionary_tsv());
  std::cout << options.records << " records -> " << out << "\n";
  return 0;
}
