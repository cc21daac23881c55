import { App } from './app.js'

const params = new URLSearchParams(window.location.search)
const baseUrl = params.get('api') ?? 'http://127.0.0.1:8400'
const reviewer = params.get('reviewer') ?? 'console-reviewer'
const token = params.get('token') ?? undefined

const root = document.getElementById('app')
if (!root) throw new Error('missing #app container')

const app = new App(root, baseUrl, { reviewer, token })
void app.start()
