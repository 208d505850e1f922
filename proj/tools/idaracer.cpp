#include <cstdio>

int main() {
  std::puts("idaracer: placeholder");
  return 0;
}
