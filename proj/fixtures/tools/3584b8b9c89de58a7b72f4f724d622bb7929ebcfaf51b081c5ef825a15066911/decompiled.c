// asyncrat: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (anti_analysis(arg) == 0) {
        return -1;
    }
    v1 = install_persistence(arg);
    if (c2_loop(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t anti_analysis(void *arg)
{
    int32_t v1 = 0;
    if (IsDebuggerPresent(arg) == 0) {
        return -1;
    }
    v1 = CreateMutexW(arg);
    return v1;
}

int32_t install_persistence(void *arg)
{
    int32_t v1 = 0;
    if (RegCreateKeyExW(arg) == 0) {
        return -1;
    }
    v1 = RegSetValueExW(arg);
    return v1;
}

int32_t c2_loop(void *arg)
{
    int32_t v1 = 0;
    if (WSAStartup(arg) == 0) {
        return -1;
    }
    v1 = connect(arg);
    if (send(arg) == 0) {
        return -1;
    }
    v1 = recv(arg);
    if (Sleep(arg) == 0) {
        return -1;
    }
    return v1;
}
