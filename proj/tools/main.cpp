#include "app.hpp"

int main(int argc, char** argv) { return kcluster::app::run(argc, argv); }
