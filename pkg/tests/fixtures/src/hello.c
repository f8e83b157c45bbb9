#include <stdio.h>

static int greet_count(int n) {
    int total = 0;
    for (int i = 0; i < n; i++) {
        total += i + 1;
    }
    return total;
}

int main(void) {
    int c = greet_count(3);
    printf("hello %d\n", c);
    return 0;
}
