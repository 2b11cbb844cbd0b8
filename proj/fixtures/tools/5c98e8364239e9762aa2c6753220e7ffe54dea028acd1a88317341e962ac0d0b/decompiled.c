// zbot: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (inject_explorer(arg) == 0) {
        return -1;
    }
    v1 = fetch_config(arg);
    return v1;
}

int32_t inject_explorer(void *arg)
{
    int32_t v1 = 0;
    if (OpenProcess(arg) == 0) {
        return -1;
    }
    v1 = VirtualAllocEx(arg);
    if (WriteProcessMemory(arg) == 0) {
        return -1;
    }
    v1 = CreateRemoteThread(arg);
    return v1;
}

int32_t fetch_config(void *arg)
{
    int32_t v1 = 0;
    if (InternetOpenA(arg) == 0) {
        return -1;
    }
    v1 = HttpSendRequestA(arg);
    if (InternetReadFile(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t persist(void *arg)
{
    int32_t v1 = 0;
    if (RegSetValueExA(arg) == 0) {
        return -1;
    }
    return v1;
}
