// Regenerates the checked-in fixtures. Usage: gen_fixtures <fixtures-dir>

#include <iostream>

#include "fixture_builder.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: gen_fixtures <fixtures-dir>\n";
        return 2;
    }
    const std::filesystem::path root = argv[1];
    embsteer::testing::write_toy_fixture(root / "toy");
    embsteer::testing::write_mini_fixture(root / "mini");
    std::cout << "fixtures written under " << root << "\n";
    return 0;
}
