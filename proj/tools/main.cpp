#include <string>
#include <vector>

#include "trajloom/cli.hpp"

int main(int argc, char** argv) { return trajloom::dispatch(std::vector<std::string>(argv, argv + argc)); }
