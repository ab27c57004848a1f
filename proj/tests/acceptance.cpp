// Acceptance suite: one pass/fail line per criterion (A1..A9).
// Placeholder main while the core is under construction.
#include <iostream>
int main() {
  std::cout << "acceptance suite not yet implemented\n";
  return 1;
}
