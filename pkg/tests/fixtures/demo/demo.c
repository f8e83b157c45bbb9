/* Self-contained demo program: a toy block transcoder plus a tiny open
 * hash table, with enough small static helpers that optimizing builds
 * inline aggressively while -O0 keeps every function intact. No headers,
 * so the only line-table file is this one. */

#define BLOCK 16
#define TABLE_WIDTH 32
#define ROUNDS 4

static unsigned int state_seed = 0x9e3779b9u;

static unsigned int rotl(unsigned int value, int amount)
{
    amount &= 31;
    if (amount == 0) {
        return value;
    }
    return (value << amount) | (value >> (32 - amount));
}

static int clamp_byte(int value)
{
    if (value < 0) {
        return 0;
    }
    if (value > 255) {
        return 255;
    }
    return value;
}

static unsigned int mix_step(unsigned int acc, unsigned int item)
{
    acc ^= item + 0x7f4a7c15u;
    acc = rotl(acc, 13);
    acc *= 5;
    return acc + 0xe6546b64u;
}

static int table_slot(int key, int width)
{
    int slot = key % width;
    if (slot < 0) {
        slot += width;
    }
    return slot;
}

static unsigned int next_state(void)
{
    state_seed = mix_step(state_seed, 0x85ebca6bu);
    return state_seed;
}

unsigned int checksum_buffer(const unsigned char *data, int length)
{
    unsigned int acc = 0x811c9dc5u;
    int i;
    for (i = 0; i < length; i++) {
        acc = mix_step(acc, data[i]);
    }
    if (length == 0) {
        acc = mix_step(acc, 0u);
    }
    return acc;
}

int encode_byte(int value, int key, int position)
{
    int masked = (value ^ (key & 0xff)) & 0xff;
    return (masked + position) & 0xff;
}

int decode_byte(int value, int key, int position)
{
    int shifted = (value - position) & 0xff;
    return (shifted ^ (key & 0xff)) & 0xff;
}

int encode_block(unsigned char *block, int length, int key)
{
    int i;
    int touched = 0;
    for (i = 0; i < length; i++) {
        int coded = encode_byte(block[i], key, i);
        if (coded != block[i]) {
            touched++;
        }
        block[i] = (unsigned char)coded;
    }
    return touched;
}

int decode_block(unsigned char *block, int length, int key)
{
    int i;
    int touched = 0;
    for (i = length - 1; i >= 0; i--) {
        int plain = decode_byte(block[i], key, i);
        if (plain != block[i]) {
            touched++;
        }
        block[i] = (unsigned char)plain;
    }
    return touched;
}

unsigned int round_trip(unsigned char *scratch, int length, int key)
{
    unsigned int before = checksum_buffer(scratch, length);
    int i;
    for (i = 0; i < ROUNDS; i++) {
        encode_block(scratch, length, key + i);
    }
    for (i = ROUNDS - 1; i >= 0; i--) {
        decode_block(scratch, length, key + i);
    }
    return before ^ checksum_buffer(scratch, length);
}

void build_table(int *table, int width, int key)
{
    int i;
    for (i = 0; i < width; i++) {
        table[i] = -1;
    }
    for (i = 0; i < width / 2; i++) {
        int probe = table_slot(key + i * 7, width);
        while (table[probe] >= 0) {
            probe = table_slot(probe + 1, width);
        }
        table[probe] = clamp_byte(key + i);
    }
}

int table_scan(const int *table, int width, int wanted)
{
    int i;
    for (i = 0; i < width; i++) {
        if (table[i] == wanted) {
            return i;
        }
    }
    return -1;
}

int table_census(const int *table, int width)
{
    int filled = 0;
    int i;
    for (i = 0; i < width; i++) {
        if (table[i] >= 0) {
            filled++;
        }
    }
    return filled;
}

int histogram_peak(const unsigned char *data, int length)
{
    int counts[256];
    int i;
    int best = 0;
    for (i = 0; i < 256; i++) {
        counts[i] = 0;
    }
    for (i = 0; i < length; i++) {
        counts[data[i]]++;
    }
    for (i = 1; i < 256; i++) {
        if (counts[i] > counts[best]) {
            best = i;
        }
    }
    return best;
}

int run_length(const unsigned char *data, int length, int start)
{
    int i = start;
    if (start >= length) {
        return 0;
    }
    while (i < length && data[i] == data[start]) {
        i++;
    }
    return i - start;
}

int longest_run(const unsigned char *data, int length)
{
    int best = 0;
    int i = 0;
    while (i < length) {
        int run = run_length(data, length, i);
        if (run > best) {
            best = run;
        }
        i += run;
    }
    return best;
}

int stress_tables(int trials)
{
    int table[TABLE_WIDTH];
    int failures = 0;
    int t;
    for (t = 0; t < trials; t++) {
        int key = (int)(next_state() & 0xffff);
        build_table(table, TABLE_WIDTH, key);
        if (table_census(table, TABLE_WIDTH) != TABLE_WIDTH / 2) {
            failures++;
        }
        if (table_scan(table, TABLE_WIDTH, clamp_byte(key)) < 0) {
            failures++;
        }
    }
    return failures;
}

int stress_blocks(int trials)
{
    unsigned char scratch[BLOCK];
    int failures = 0;
    int t;
    int i;
    for (t = 0; t < trials; t++) {
        int key = (int)(next_state() & 0x7fff);
        for (i = 0; i < BLOCK; i++) {
            scratch[i] = (unsigned char)((next_state() >> 8) & 0xff);
        }
        if (round_trip(scratch, BLOCK, key) != 0u) {
            failures++;
        }
    }
    return failures;
}

int stress_analysis(int trials)
{
    unsigned char scratch[BLOCK * 4];
    int failures = 0;
    int t;
    int i;
    for (t = 0; t < trials; t++) {
        unsigned char fill = (unsigned char)(next_state() & 0xff);
        for (i = 0; i < BLOCK * 4; i++) {
            scratch[i] = fill;
        }
        if (histogram_peak(scratch, BLOCK * 4) != fill) {
            failures++;
        }
        if (longest_run(scratch, BLOCK * 4) != BLOCK * 4) {
            failures++;
        }
    }
    return failures;
}

int main(void)
{
    int bad = 0;
    bad += stress_tables(8);
    bad += stress_blocks(8);
    bad += stress_analysis(4);
    if (encode_byte(decode_byte(0xab, 77, 3), 77, 3) != 0xab) {
        bad++;
    }
    if (checksum_buffer((const unsigned char *)"x", 1) == checksum_buffer((const unsigned char *)"y", 1)) {
        bad++;
    }
    return bad == 0 ? 0 : 1;
}
