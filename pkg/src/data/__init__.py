# JSON input and report storage
