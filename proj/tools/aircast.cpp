#include "aircast/cli.hpp"

int main(int argc, char** argv)
{
    return aircast::run_cli(argc, argv);
}
