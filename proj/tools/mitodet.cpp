#include <iostream>

int main() {
  std::cout << "mitodet cli placeholder\n";
  return 0;
}
